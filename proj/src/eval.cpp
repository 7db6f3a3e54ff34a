#include "fpm/eval.hpp"
#include "fpm/error.hpp"
#include "fpm/util.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

namespace fs = std::filesystem;

namespace fpm {

ValuePtr makeUnit()
{
    static ValuePtr unit = std::make_shared<Value>();
    return unit;
}

ValuePtr makeString(std::string s)
{
    auto v = std::make_shared<Value>();
    v->kind = Value::Kind::String;
    v->str = std::move(s);
    return v;
}

ValuePtr makeSymbol(std::string s)
{
    auto v = std::make_shared<Value>();
    v->kind = Value::Kind::Symbol;
    v->str = std::move(s);
    return v;
}

ValuePtr makeInt(int64_t n)
{
    auto v = std::make_shared<Value>();
    v->kind = Value::Kind::Int;
    v->num = n;
    return v;
}

ValuePtr makeBool(bool b)
{
    auto v = std::make_shared<Value>();
    v->kind = Value::Kind::Bool;
    v->flag = b;
    return v;
}

ValuePtr makeList(std::vector<ValuePtr> items)
{
    auto v = std::make_shared<Value>();
    v->kind = Value::Kind::List;
    v->items = std::move(items);
    return v;
}

ValuePtr makeOpaque(std::string tag, std::shared_ptr<const void> data)
{
    auto v = std::make_shared<Value>();
    v->kind = Value::Kind::Opaque;
    v->opaque = std::make_shared<Opaque>(Opaque{std::move(tag), std::move(data)});
    return v;
}

bool valuesEqual(const Value & a, const Value & b)
{
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case Value::Kind::Unit: return true;
    case Value::Kind::String:
    case Value::Kind::Symbol: return a.str == b.str;
    case Value::Kind::Int: return a.num == b.num;
    case Value::Kind::Bool: return a.flag == b.flag;
    case Value::Kind::List:
        if (a.items.size() != b.items.size()) return false;
        for (size_t i = 0; i < a.items.size(); ++i)
            if (!valuesEqual(*a.items[i], *b.items[i])) return false;
        return true;
    case Value::Kind::Closure: return a.closure == b.closure;
    case Value::Kind::Builtin: return a.builtin == b.builtin;
    case Value::Kind::Opaque: return a.opaque->data == b.opaque->data;
    }
    return false;
}

std::string showValue(const Value & v)
{
    switch (v.kind) {
    case Value::Kind::Unit: return "#<unit>";
    case Value::Kind::String: return printSExpr(SExpr::string(v.str));
    case Value::Kind::Symbol: return v.str;
    case Value::Kind::Int: return std::to_string(v.num);
    case Value::Kind::Bool: return v.flag ? "#t" : "#f";
    case Value::Kind::List: {
        std::string out = "(";
        for (size_t i = 0; i < v.items.size(); ++i) {
            if (i) out += ' ';
            out += showValue(*v.items[i]);
        }
        return out + ")";
    }
    case Value::Kind::Closure: return "#<closure>";
    case Value::Kind::Builtin: return "#<builtin " + v.builtin->name + ">";
    case Value::Kind::Opaque: return "#<" + v.opaque->tag + ">";
    }
    return "?";
}

ValuePtr sexprToValue(const SExpr & e)
{
    switch (e.kind) {
    case SExpr::Kind::Symbol: return makeSymbol(e.atom);
    case SExpr::Kind::String: return makeString(e.atom);
    case SExpr::Kind::Int: return makeInt(e.num);
    case SExpr::Kind::Bool: return makeBool(e.flag);
    case SExpr::Kind::List: {
        std::vector<ValuePtr> items;
        items.reserve(e.items.size());
        for (auto & i : e.items) items.push_back(sexprToValue(i));
        return makeList(std::move(items));
    }
    }
    return makeUnit();
}

SExpr valueToSExpr(const Value & v)
{
    switch (v.kind) {
    case Value::Kind::String: return SExpr::string(v.str);
    case Value::Kind::Symbol: return SExpr::symbol(v.str);
    case Value::Kind::Int: return SExpr::integer(v.num);
    case Value::Kind::Bool: return SExpr::boolean(v.flag);
    case Value::Kind::List: {
        std::vector<SExpr> items;
        items.reserve(v.items.size());
        for (auto & i : v.items) items.push_back(valueToSExpr(*i));
        return SExpr::list(std::move(items));
    }
    case Value::Kind::Unit:
    case Value::Kind::Closure:
    case Value::Kind::Builtin:
    case Value::Kind::Opaque:
        fail("NotSerializable", "cannot serialize " + showValue(v));
    }
    fail("NotSerializable", "cannot serialize value");
}

/* ---- evaluator core -------------------------------------------------- */

static ValuePtr lookup(const EnvPtr & env, const std::string & name)
{
    for (const EnvFrame * frame = env.get(); frame; frame = frame->parent.get()) {
        auto it = frame->bindings.find(name);
        if (it != frame->bindings.end()) return it->second;
    }
    fail("UnboundVariable", "unbound variable '" + name + "'");
}

Evaluator::Evaluator()
{
    global_ = std::make_shared<EnvFrame>();
    cwd = fs::current_path();
    installStdlib();
}

void Evaluator::define(const std::string & name, ValuePtr v)
{
    global_->bindings[name] = std::move(v);
}

fs::path Evaluator::resolve(const fs::path & p) const
{
    return p.is_absolute() ? p : cwd / p;
}

void Evaluator::logLine(const std::string & line)
{
    if (log) *log << line << "\n";
}

ValuePtr Evaluator::apply(const ValuePtr & fn, std::vector<ValuePtr> args)
{
    if (fn->kind == Value::Kind::Builtin) return fn->builtin->fn(args, *this);
    if (fn->kind != Value::Kind::Closure)
        fail("TypeError", "cannot apply non-procedure " + showValue(*fn));
    const Closure & c = *fn->closure;
    if (args.size() != c.params.size())
        fail("ArityError",
            "procedure expects " + std::to_string(c.params.size()) + " arguments, got "
                + std::to_string(args.size()));
    auto frame = std::make_shared<EnvFrame>();
    frame->parent = c.env;
    for (size_t i = 0; i < args.size(); ++i) frame->bindings[c.params[i]] = std::move(args[i]);
    ValuePtr result = makeUnit();
    for (auto & form : c.body) result = eval(form, frame);
    return result;
}

ValuePtr Evaluator::evalTopLevel(const SExpr & e)
{
    if (e.kind == SExpr::Kind::List && !e.items.empty() && e.items[0].isSymbol("define")) {
        if (e.items.size() < 3) fail("ArityError", "malformed define");
        const SExpr & target = e.items[1];
        if (target.kind == SExpr::Kind::Symbol) {
            if (e.items.size() != 3) fail("ArityError", "malformed define");
            define(target.atom, eval(e.items[2], global_));
        } else if (target.kind == SExpr::Kind::List && !target.items.empty()
            && target.items[0].kind == SExpr::Kind::Symbol) {
            /* (define (f a b) body...) sugar. */
            auto c = std::make_shared<Closure>();
            for (size_t i = 1; i < target.items.size(); ++i) {
                if (target.items[i].kind != SExpr::Kind::Symbol)
                    fail("TypeError", "parameters must be symbols");
                c->params.push_back(target.items[i].atom);
            }
            c->body = {e.items.begin() + 2, e.items.end()};
            c->env = global_;
            auto v = std::make_shared<Value>();
            v->kind = Value::Kind::Closure;
            v->closure = c;
            define(target.items[0].atom, v);
        } else {
            fail("TypeError", "malformed define");
        }
        return makeUnit();
    }
    return eval(e, global_);
}

static ValuePtr evalQuasiquote(Evaluator & ev, const SExpr & e, const EnvPtr & env)
{
    if (e.kind == SExpr::Kind::List && e.items.size() == 2 && e.items[0].isSymbol("unquote"))
        return ev.eval(e.items[1], env);
    if (e.kind == SExpr::Kind::List && !e.items.empty() && e.items[0].isSymbol("quasiquote"))
        fail("ParseError", "nested quasiquote is not supported (one level only)");
    if (e.kind == SExpr::Kind::List) {
        std::vector<ValuePtr> items;
        items.reserve(e.items.size());
        for (auto & i : e.items) items.push_back(evalQuasiquote(ev, i, env));
        return makeList(std::move(items));
    }
    return sexprToValue(e);
}

ValuePtr Evaluator::eval(const SExpr & e, const EnvPtr & env)
{
    switch (e.kind) {
    case SExpr::Kind::String: return makeString(e.atom);
    case SExpr::Kind::Int: return makeInt(e.num);
    case SExpr::Kind::Bool: return makeBool(e.flag);
    case SExpr::Kind::Symbol: return lookup(env, e.atom);
    case SExpr::Kind::List: break;
    }

    if (e.items.empty()) fail("TypeError", "cannot evaluate the empty list");
    const SExpr & head = e.items[0];

    if (head.kind == SExpr::Kind::Symbol) {
        const std::string & op = head.atom;
        if (op == "quote") {
            if (e.items.size() != 2) fail("ArityError", "quote takes one argument");
            return sexprToValue(e.items[1]);
        }
        if (op == "quasiquote") {
            if (e.items.size() != 2) fail("ArityError", "quasiquote takes one argument");
            return evalQuasiquote(*this, e.items[1], env);
        }
        if (op == "unquote") fail("ParseError", "unquote outside quasiquote");
        if (op == "if") {
            if (e.items.size() != 3 && e.items.size() != 4)
                fail("ArityError", "if takes two or three arguments");
            if (eval(e.items[1], env)->truthy()) return eval(e.items[2], env);
            return e.items.size() == 4 ? eval(e.items[3], env) : makeUnit();
        }
        if (op == "let") {
            if (e.items.size() < 3 || e.items[1].kind != SExpr::Kind::List)
                fail("TypeError", "malformed let");
            auto frame = std::make_shared<EnvFrame>();
            frame->parent = env;
            for (auto & binding : e.items[1].items) {
                if (binding.kind != SExpr::Kind::List || binding.items.size() != 2
                    || binding.items[0].kind != SExpr::Kind::Symbol)
                    fail("TypeError", "malformed let binding");
                frame->bindings[binding.items[0].atom] = eval(binding.items[1], env);
            }
            ValuePtr result = makeUnit();
            for (size_t i = 2; i < e.items.size(); ++i) result = eval(e.items[i], frame);
            return result;
        }
        if (op == "lambda") {
            if (e.items.size() < 3 || e.items[1].kind != SExpr::Kind::List)
                fail("TypeError", "malformed lambda");
            auto c = std::make_shared<Closure>();
            for (auto & param : e.items[1].items) {
                if (param.kind != SExpr::Kind::Symbol)
                    fail("TypeError", "parameters must be symbols");
                c->params.push_back(param.atom);
            }
            c->body = {e.items.begin() + 2, e.items.end()};
            c->env = env;
            auto v = std::make_shared<Value>();
            v->kind = Value::Kind::Closure;
            v->closure = c;
            return v;
        }
        if (op == "begin") {
            ValuePtr result = makeUnit();
            for (size_t i = 1; i < e.items.size(); ++i) result = eval(e.items[i], env);
            return result;
        }
        if (op == "define")
            fail("ParseError", "define is only allowed at the top level");
    }

    ValuePtr fn = eval(head, env);
    std::vector<ValuePtr> args;
    args.reserve(e.items.size() - 1);
    for (size_t i = 1; i < e.items.size(); ++i) args.push_back(eval(e.items[i], env));
    return apply(fn, std::move(args));
}

/* ---- builtins --------------------------------------------------------- */

namespace {

const std::string & asString(const ValuePtr & v, const char * what)
{
    if (v->kind != Value::Kind::String)
        fail("TypeError", std::string(what) + ": expected a string, got " + showValue(*v));
    return v->str;
}

const std::vector<ValuePtr> & asList(const ValuePtr & v, const char * what)
{
    if (v->kind != Value::Kind::List)
        fail("TypeError", std::string(what) + ": expected a list, got " + showValue(*v));
    return v->items;
}

void expectArity(const std::vector<ValuePtr> & args, size_t n, const char * name)
{
    if (args.size() != n)
        fail("ArityError",
            std::string(name) + " takes " + std::to_string(n) + " arguments, got "
                + std::to_string(args.size()));
}

std::regex compileRegex(const std::string & pattern)
{
    try {
        return std::regex(pattern, std::regex::extended);
    } catch (std::regex_error & e) {
        fail("RegexError", "invalid regular expression '" + pattern + "': " + e.what());
    }
}

/* Expand \0..\9 group references and \\ escapes in a substitution
   template. */
std::string expandTemplate(const std::string & tmpl, const std::smatch & match)
{
    std::string out;
    for (size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '\\' && i + 1 < tmpl.size()) {
            char c = tmpl[++i];
            if (c >= '0' && c <= '9') {
                size_t group = static_cast<size_t>(c - '0');
                if (group < match.size()) out += match[group].str();
            } else {
                out += c;
            }
        } else {
            out += tmpl[i];
        }
    }
    return out;
}

void substituteFile(Evaluator & ev, const fs::path & file,
    const std::vector<std::pair<std::string, std::string>> & clauses)
{
    std::vector<std::regex> regexes;
    regexes.reserve(clauses.size());
    for (auto & [pattern, tmpl] : clauses) regexes.push_back(compileRegex(pattern));

    fs::path path = ev.resolve(file);
    std::string contents = util::readFile(path);
    std::string out;
    size_t pos = 0;
    while (pos <= contents.size()) {
        size_t nl = contents.find('\n', pos);
        bool hasNewline = nl != std::string::npos;
        std::string line = contents.substr(pos, hasNewline ? nl - pos : std::string::npos);
        for (size_t c = 0; c < clauses.size(); ++c) {
            std::smatch match;
            if (std::regex_search(line, match, regexes[c])) {
                /* First matching clause wins for this line. */
                line = match.prefix().str() + expandTemplate(clauses[c].second, match)
                    + match.suffix().str();
                break;
            }
        }
        out += line;
        if (!hasNewline) break;
        out += '\n';
        pos = nl + 1;
    }

    bool executable = util::isExecutable(path);
    util::atomicWriteFile(path, out);
    if (executable)
        fs::permissions(path,
            fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
            fs::perm_options::add);
}

void patchShebangFile(Evaluator & ev, const fs::path & file,
    const std::vector<std::string> & inputDirs)
{
    fs::path path = ev.resolve(file);
    if (!fs::is_regular_file(fs::symlink_status(path))) return;
    std::string contents = util::readFile(path);
    if (contents.size() < 2 || contents[0] != '#' || contents[1] != '!') return;

    size_t eol = contents.find('\n');
    std::string line = contents.substr(2, eol == std::string::npos ? std::string::npos : eol - 2);
    /* Interpreter is the first word; anything after it is preserved. */
    size_t ws = line.find_first_not_of(" \t");
    if (ws == std::string::npos) return;
    size_t end = line.find_first_of(" \t", ws);
    std::string interpreter = line.substr(ws, end == std::string::npos ? std::string::npos : end - ws);
    std::string rest = end == std::string::npos ? "" : line.substr(end);
    std::string prog = fs::path(interpreter).filename().string();
    if (prog.empty()) return;

    for (auto & dir : inputDirs) {
        fs::path candidate = fs::path(dir) / "bin" / prog;
        if (fs::exists(candidate) && util::isExecutable(candidate)) {
            std::string newLine = "#!" + candidate.string() + rest;
            std::string newContents = newLine
                + (eol == std::string::npos ? "" : contents.substr(eol));
            bool executable = util::isExecutable(path);
            util::atomicWriteFile(path, newContents);
            if (executable)
                fs::permissions(path,
                    fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                    fs::perm_options::add);
            return;
        }
    }
}

}

void Evaluator::installStdlib()
{
    auto builtin = [&](const char * name, BuiltinFn fn) {
        auto v = std::make_shared<Value>();
        v->kind = Value::Kind::Builtin;
        v->builtin = std::make_shared<Builtin>(Builtin{name, std::move(fn)});
        define(name, v);
    };

    builtin("string-append", [](std::vector<ValuePtr> & args, Evaluator &) {
        std::string out;
        for (auto & a : args) out += asString(a, "string-append");
        return makeString(out);
    });

    builtin("symbol->string", [](std::vector<ValuePtr> & args, Evaluator &) {
        expectArity(args, 1, "symbol->string");
        if (args[0]->kind != Value::Kind::Symbol)
            fail("TypeError", "symbol->string: expected a symbol");
        return makeString(args[0]->str);
    });

    builtin("assoc-ref", [](std::vector<ValuePtr> & args, Evaluator &) -> ValuePtr {
        expectArity(args, 2, "assoc-ref");
        for (auto & entry : asList(args[0], "assoc-ref")) {
            auto & pair = asList(entry, "assoc-ref entry");
            if (pair.size() >= 2 && valuesEqual(*pair[0], *args[1])) return pair[1];
        }
        return makeBool(false);
    });

    builtin("list", [](std::vector<ValuePtr> & args, Evaluator &) {
        return makeList(args);
    });

    builtin("cons", [](std::vector<ValuePtr> & args, Evaluator &) {
        expectArity(args, 2, "cons");
        std::vector<ValuePtr> items{args[0]};
        for (auto & i : asList(args[1], "cons")) items.push_back(i);
        return makeList(std::move(items));
    });

    builtin("car", [](std::vector<ValuePtr> & args, Evaluator &) {
        expectArity(args, 1, "car");
        auto & items = asList(args[0], "car");
        if (items.empty()) fail("TypeError", "car of empty list");
        return items[0];
    });

    builtin("cdr", [](std::vector<ValuePtr> & args, Evaluator &) {
        expectArity(args, 1, "cdr");
        auto & items = asList(args[0], "cdr");
        if (items.empty()) fail("TypeError", "cdr of empty list");
        return makeList({items.begin() + 1, items.end()});
    });

    builtin("null?", [](std::vector<ValuePtr> & args, Evaluator &) {
        expectArity(args, 1, "null?");
        return makeBool(args[0]->kind == Value::Kind::List && args[0]->items.empty());
    });

    builtin("equal?", [](std::vector<ValuePtr> & args, Evaluator &) {
        expectArity(args, 2, "equal?");
        return makeBool(valuesEqual(*args[0], *args[1]));
    });

    builtin("not", [](std::vector<ValuePtr> & args, Evaluator &) {
        expectArity(args, 1, "not");
        return makeBool(!args[0]->truthy());
    });

    builtin("getenv", [](std::vector<ValuePtr> & args, Evaluator & ev) -> ValuePtr {
        expectArity(args, 1, "getenv");
        auto it = ev.envMap.find(asString(args[0], "getenv"));
        if (it == ev.envMap.end()) return makeBool(false);
        return makeString(it->second);
    });

    builtin("log", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 1, "log");
        ev.logLine(asString(args[0], "log"));
        return makeUnit();
    });

    builtin("write-file", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 2, "write-file");
        util::writeFile(ev.resolve(asString(args[0], "write-file")),
            asString(args[1], "write-file"));
        return makeUnit();
    });

    builtin("read-file", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 1, "read-file");
        return makeString(util::readFile(ev.resolve(asString(args[0], "read-file"))));
    });

    builtin("file-exists?", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 1, "file-exists?");
        return makeBool(
            fs::exists(fs::symlink_status(ev.resolve(asString(args[0], "file-exists?")))));
    });

    builtin("directory?", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 1, "directory?");
        return makeBool(fs::is_directory(ev.resolve(asString(args[0], "directory?"))));
    });

    builtin("mkdir-p", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 1, "mkdir-p");
        fs::create_directories(ev.resolve(asString(args[0], "mkdir-p")));
        return makeUnit();
    });

    builtin("symlink", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 2, "symlink");
        fs::create_symlink(asString(args[0], "symlink"),
            ev.resolve(asString(args[1], "symlink")));
        return makeUnit();
    });

    builtin("chdir", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 1, "chdir");
        fs::path target = ev.resolve(asString(args[0], "chdir"));
        if (!fs::is_directory(target))
            fail("IoError", "chdir: '" + target.string() + "' is not a directory");
        ev.cwd = fs::weakly_canonical(target);
        return makeUnit();
    });

    builtin("invoke", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        if (args.empty()) fail("ArityError", "invoke needs a program name");
        std::string program = asString(args[0], "invoke");
        fs::path resolved;
        if (program.find('/') != std::string::npos) {
            resolved = ev.resolve(program);
        } else {
            for (auto & dir : ev.searchPath) {
                fs::path candidate = dir / program;
                if (fs::exists(candidate) && util::isExecutable(candidate)) {
                    resolved = candidate;
                    break;
                }
            }
            if (resolved.empty())
                fail("InvokeFailed", "program '" + program + "' not found in build inputs");
        }
        std::vector<std::string> argv;
        for (size_t i = 1; i < args.size(); ++i) argv.push_back(asString(args[i], "invoke"));
        std::string output;
        int status = util::runProcess(resolved, argv, ev.envMap, ev.cwd, output);
        if (ev.log) *ev.log << output;
        if (status != 0)
            fail("InvokeFailed",
                "'" + program + "' exited with status " + std::to_string(status));
        return makeUnit();
    });

    builtin("find-files", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 2, "find-files");
        fs::path dir = ev.resolve(asString(args[0], "find-files"));
        std::regex regex = compileRegex(asString(args[1], "find-files"));
        std::vector<std::string> found;
        if (fs::is_directory(dir))
            for (auto & entry : fs::recursive_directory_iterator(dir)) {
                auto st = entry.symlink_status();
                if (!fs::is_regular_file(st) && !fs::is_symlink(st)) continue;
                std::string basename = entry.path().filename().string();
                if (std::regex_search(basename, regex)) {
                    std::string rel = fs::relative(entry.path(), dir).generic_string();
                    found.push_back((fs::path(asString(args[0], "find-files")) / rel)
                            .generic_string());
                }
            }
        std::sort(found.begin(), found.end());
        std::vector<ValuePtr> out;
        for (auto & f : found) out.push_back(makeString(f));
        return makeList(std::move(out));
    });

    builtin("copy-recursively", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 2, "copy-recursively");
        util::copyRecursive(ev.resolve(asString(args[0], "copy-recursively")),
            ev.resolve(asString(args[1], "copy-recursively")));
        return makeUnit();
    });

    builtin("delete-recursively", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 1, "delete-recursively");
        util::deleteRecursive(ev.resolve(asString(args[0], "delete-recursively")));
        return makeUnit();
    });

    builtin("patch-shebang", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 2, "patch-shebang");
        std::vector<std::string> dirs;
        for (auto & d : asList(args[1], "patch-shebang"))
            dirs.push_back(asString(d, "patch-shebang"));
        patchShebangFile(ev, asString(args[0], "patch-shebang"), dirs);
        return makeUnit();
    });

    builtin("substitute", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 2, "substitute");
        std::vector<std::string> files;
        if (args[0]->kind == Value::Kind::String)
            files.push_back(args[0]->str);
        else
            for (auto & f : asList(args[0], "substitute"))
                files.push_back(asString(f, "substitute"));
        std::vector<std::pair<std::string, std::string>> clauses;
        for (auto & c : asList(args[1], "substitute")) {
            auto & pair = asList(c, "substitute clause");
            if (pair.size() != 2)
                fail("TypeError", "substitute clauses must be (regex replacement) pairs");
            clauses.emplace_back(asString(pair[0], "substitute"), asString(pair[1], "substitute"));
        }
        for (auto & f : files) substituteFile(ev, f, clauses);
        return makeUnit();
    });

    builtin("alist-cons-after", [](std::vector<ValuePtr> & args, Evaluator &) {
        expectArity(args, 4, "alist-cons-after");
        auto & alist = asList(args[3], "alist-cons-after");
        std::vector<ValuePtr> out;
        bool inserted = false;
        for (auto & entry : alist) {
            out.push_back(entry);
            if (!inserted) {
                auto & pair = asList(entry, "alist-cons-after entry");
                if (!pair.empty() && valuesEqual(*pair[0], *args[0])) {
                    out.push_back(makeList({args[1], args[2]}));
                    inserted = true;
                }
            }
        }
        if (!inserted)
            fail("KeyNotFound", "alist-cons-after: key " + showValue(*args[0]) + " not found");
        return makeList(std::move(out));
    });

    builtin("eval-file", [](std::vector<ValuePtr> & args, Evaluator & ev) {
        expectArity(args, 1, "eval-file");
        auto forms = parseSExprs(util::readFile(ev.resolve(asString(args[0], "eval-file"))));
        ValuePtr result = makeUnit();
        for (auto & form : forms) result = ev.evalTopLevel(form);
        return result;
    });
}

}
