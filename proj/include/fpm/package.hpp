#pragma once

#include "fpm/derivation.hpp"
#include "fpm/eval.hpp"
#include "fpm/sexpr.hpp"
#include "fpm/store.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace fpm {

class Registry;

struct Location
{
    std::string file;
    int line = 0, col = 0;

    std::string display() const { return file + ":" + std::to_string(line); }
};

struct Origin
{
    std::string method; // "local-file" or "seed"
    std::string uri;
    std::array<unsigned char, 32> sha256{};
};

struct Package;
using PackagePtr = std::shared_ptr<const Package>;

/* A deferred field: evaluated on demand under the dynamically scoped
   current system, once per (thunk, system).  Shared between a package and
   its inherit-derived variants. */
class FieldThunk
{
public:
    FieldThunk(SExpr expr, EnvPtr env) : expr_(std::move(expr)), env_(std::move(env)) {}

    ValuePtr force(const std::string & system) const;
    const SExpr & expr() const { return expr_; }

private:
    SExpr expr_;
    EnvPtr env_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, ValuePtr> cache_;
};

using ThunkPtr = std::shared_ptr<const FieldThunk>;

struct Package
{
    std::string name;
    std::string version;
    Origin source;
    std::string buildSystem;
    ThunkPtr arguments; // evaluates to a keyword/value list
    ThunkPtr inputs;    // evaluates to a list of ("label" package) pairs
    std::vector<std::pair<std::string, PackagePtr>> propagatedInputs;
    std::string synopsis, description, homePage;
    std::string license; // uninterpreted symbol
    Location location;

    std::vector<std::pair<std::string, PackagePtr>> forcedInputs(
        const std::string & system) const;
    SExpr forcedArguments(const std::string & system) const;
};

/* The dynamically scoped system parameter seen by (current-system) during
   thunk evaluation. */
class CurrentSystemScope
{
public:
    explicit CurrentSystemScope(std::string system);
    ~CurrentSystemScope();
    static std::string current();
};

/* Parse a package file: top-level (define <name> (package ...)) and
   (define <name> (origin ...)) forms.  Later forms may reference earlier
   binding names; `registry` (optional) backs the registry-ref escape. */
std::vector<std::pair<std::string, PackagePtr>> parsePackageFile(
    const std::filesystem::path & path, const Registry * registry = nullptr);

/* Purely functional field override; non-overridden fields (thunks
   included) are shared with the base.  Override expressions are evaluated
   (or re-thunked) in `ev`'s global scope. */
PackagePtr inheritPackage(const PackagePtr & base,
    const std::vector<std::pair<std::string, SExpr>> & overrides, Evaluator & ev,
    Location location);

class Registry
{
public:
    /* Load every .pkg file (sorted) in the directory. */
    void loadDirectory(const std::filesystem::path & dir);
    void addPackage(const PackagePtr & p);

    /* "name" resolves to the highest version; "name@version" is exact. */
    PackagePtr find(const std::string & spec) const; // PackageNotFound
    std::vector<PackagePtr> all() const;             // sorted by name, version

private:
    std::map<std::string, PackagePtr> byNameVersion_;
};

/* -1, 0, 1: component-wise numeric-then-lexicographic comparison. */
int compareVersions(const std::string & a, const std::string & b);

std::pair<StorePath, Derivation> originDerivation(Store & store, const Origin & origin,
    const std::string & nameHint, const std::string & system);

std::pair<StorePath, Derivation> packageDerivation(Store & store, const PackagePtr & package,
    const std::string & system, const std::vector<std::filesystem::path> & moduleSearchPath);

}
