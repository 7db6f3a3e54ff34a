#pragma once

#include "fpm/sexpr.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace fpm {

struct Value;
using ValuePtr = std::shared_ptr<const Value>;

struct EnvFrame;
using EnvPtr = std::shared_ptr<EnvFrame>;

class Evaluator;

using BuiltinFn = std::function<ValuePtr(std::vector<ValuePtr> &, Evaluator &)>;

struct Closure
{
    std::vector<std::string> params;
    std::vector<SExpr> body;
    EnvPtr env; // static scope
};

struct Builtin
{
    std::string name;
    BuiltinFn fn;
};

/* Host-only escape hatch: lets the package layer flow its records through
   thunk evaluation without the build stratum being able to inspect them. */
struct Opaque
{
    std::string tag;
    std::shared_ptr<const void> data;
};

struct Value
{
    enum class Kind { Unit, String, Symbol, Int, Bool, List, Closure, Builtin, Opaque };

    Kind kind = Kind::Unit;
    std::string str; // String and Symbol
    int64_t num = 0;
    bool flag = false;
    std::vector<ValuePtr> items;
    std::shared_ptr<Closure> closure;
    std::shared_ptr<Builtin> builtin;
    std::shared_ptr<Opaque> opaque;

    bool truthy() const { return !(kind == Kind::Bool && !flag); }
};

ValuePtr makeUnit();
ValuePtr makeString(std::string s);
ValuePtr makeSymbol(std::string s);
ValuePtr makeInt(int64_t n);
ValuePtr makeBool(bool b);
ValuePtr makeList(std::vector<ValuePtr> items);
ValuePtr makeOpaque(std::string tag, std::shared_ptr<const void> data);

bool valuesEqual(const Value & a, const Value & b);
std::string showValue(const Value & v);

/* Quote a datum; symbols stay symbols. */
ValuePtr sexprToValue(const SExpr & e);

/* Inverse; throws NotSerializable on closures, builtins and opaques. */
SExpr valueToSExpr(const Value & v);

struct EnvFrame
{
    std::map<std::string, ValuePtr> bindings;
    EnvPtr parent;
};

/* One evaluator instance per build; file-system builtins resolve relative
   paths against `cwd`, never the process working directory. */
class Evaluator
{
public:
    Evaluator();

    std::filesystem::path cwd;
    std::map<std::string, std::string> envMap;   // getenv source
    std::vector<std::filesystem::path> searchPath; // invoke program lookup
    std::ostream * log = nullptr;

    EnvPtr globalEnv() { return global_; }
    void define(const std::string & name, ValuePtr v);

    ValuePtr eval(const SExpr & e, const EnvPtr & env);
    /* Like eval but permits `define`, which mutates the global frame. */
    ValuePtr evalTopLevel(const SExpr & e);
    ValuePtr apply(const ValuePtr & fn, std::vector<ValuePtr> args);

    std::filesystem::path resolve(const std::filesystem::path & p) const;
    void logLine(const std::string & line);

private:
    EnvPtr global_;
    void installStdlib();
};

}
