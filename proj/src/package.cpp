#include "fpm/package.hpp"

#include "fpm/build_system.hpp"
#include "fpm/error.hpp"
#include "fpm/util.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>
#include <set>
#include <tuple>

namespace fpm {

namespace {

thread_local std::vector<std::string> systemStack;

PackagePtr asPackage(const ValuePtr & v, const std::string & what)
{
    if (v->kind != Value::Kind::Opaque || v->opaque->tag != "package")
        fail("TypeError", what + " is not a package");
    return std::static_pointer_cast<const Package>(v->opaque->data);
}

std::shared_ptr<const Origin> asOrigin(const ValuePtr & v, const std::string & what)
{
    if (v->kind != Value::Kind::Opaque || v->opaque->tag != "origin")
        fail("TypeError", what + " is not an origin");
    return std::static_pointer_cast<const Origin>(v->opaque->data);
}

std::string evalString(Evaluator & ev, const SExpr & e, const std::string & field)
{
    auto v = ev.eval(e, ev.globalEnv());
    if (v->kind != Value::Kind::String)
        fail("TypeError", "field `" + field + "' must be a string");
    return v->str;
}

Location locationOf(const SExpr & e, const std::string & file)
{
    return Location{file, e.line, e.col};
}

Origin parseOriginForm(Evaluator & ev, const SExpr & form, const std::string & file)
{
    Origin o;
    bool sawMethod = false, sawUri = false, sawSha = false;
    for (size_t i = 1; i < form.items.size(); i++) {
        const SExpr & field = form.items[i];
        if (field.kind != SExpr::Kind::List || field.items.empty()
            || field.items[0].kind != SExpr::Kind::Symbol || field.items.size() != 2)
            fail("ParseError", "malformed origin field (" + locationOf(field, file).display() + ")");
        const std::string & fname = field.items[0].atom;
        const SExpr & value = field.items[1];
        if (fname == "method") {
            if (value.kind != SExpr::Kind::Symbol)
                fail("TypeError", "origin method must be a symbol");
            if (value.atom != "local-file" && value.atom != "seed")
                fail("ArgumentError", "unsupported origin method `" + value.atom + "'");
            o.method = value.atom;
            sawMethod = true;
        } else if (fname == "uri") {
            o.uri = evalString(ev, value, "uri");
            sawUri = true;
        } else if (fname == "sha256") {
            /* (sha256 (base32 "...")), 52 characters exactly */
            if (value.kind != SExpr::Kind::List || value.items.size() != 2
                || !value.items[0].isSymbol("base32")
                || value.items[1].kind != SExpr::Kind::String)
                fail("ParseError", "sha256 must be (base32 \"...\")");
            o.sha256 = base32Decode32(value.items[1].atom);
            sawSha = true;
        } else {
            fail("UnknownField", "unknown origin field `" + fname + "'");
        }
    }
    Location loc = locationOf(form, file);
    if (!sawMethod)
        fail("MissingField", "method (" + loc.display() + ")");
    if (!sawUri)
        fail("MissingField", "uri (" + loc.display() + ")");
    if (!sawSha)
        fail("MissingField", "sha256 (" + loc.display() + ")");
    return o;
}

const std::vector<std::string> & packageFieldNames()
{
    static const std::vector<std::string> names = {"name", "version", "source", "build-system",
        "arguments", "inputs", "propagated-inputs", "synopsis", "description", "home-page",
        "license"};
    return names;
}

/* Apply one (field value) form to a package under construction. */
void applyField(Evaluator & ev, Package & p, const SExpr & field, const std::string & file)
{
    if (field.kind != SExpr::Kind::List || field.items.size() != 2
        || field.items[0].kind != SExpr::Kind::Symbol)
        fail("ParseError", "malformed package field (" + locationOf(field, file).display() + ")");
    const std::string & fname = field.items[0].atom;
    const SExpr & value = field.items[1];

    if (fname == "name")
        p.name = evalString(ev, value, fname);
    else if (fname == "version")
        p.version = evalString(ev, value, fname);
    else if (fname == "synopsis")
        p.synopsis = evalString(ev, value, fname);
    else if (fname == "description")
        p.description = evalString(ev, value, fname);
    else if (fname == "home-page")
        p.homePage = evalString(ev, value, fname);
    else if (fname == "license") {
        if (value.kind != SExpr::Kind::Symbol)
            fail("TypeError", "license must be a symbol");
        p.license = value.atom;
    } else if (fname == "build-system") {
        if (value.kind != SExpr::Kind::Symbol)
            fail("TypeError", "build-system must be a symbol");
        p.buildSystem = value.atom;
    } else if (fname == "source") {
        if (value.kind == SExpr::Kind::List && !value.items.empty()
            && value.items[0].isSymbol("origin"))
            p.source = parseOriginForm(ev, value, file);
        else
            p.source = *asOrigin(ev.eval(value, ev.globalEnv()), "source");
    } else if (fname == "arguments") {
        p.arguments = std::make_shared<FieldThunk>(value, ev.globalEnv());
    } else if (fname == "inputs") {
        p.inputs = std::make_shared<FieldThunk>(value, ev.globalEnv());
    } else if (fname == "propagated-inputs") {
        auto v = ev.eval(value, ev.globalEnv());
        if (v->kind != Value::Kind::List)
            fail("TypeError", "propagated-inputs must be a list");
        p.propagatedInputs.clear();
        for (auto & item : v->items) {
            if (item->kind != Value::Kind::List || item->items.size() != 2
                || item->items[0]->kind != Value::Kind::String)
                fail("TypeError", "propagated input must be (\"label\" package)");
            p.propagatedInputs.emplace_back(
                item->items[0]->str, asPackage(item->items[1], "propagated input"));
        }
    } else {
        fail("UnknownField",
            "unknown package field `" + fname + "' (" + locationOf(field, file).display() + ")");
    }
}

PackagePtr parsePackageForm(Evaluator & ev, const SExpr & form, const std::string & file)
{
    Location loc = locationOf(form.items.empty() ? form : form.items[0], file);

    /* (inherit base) must come first when present. */
    if (form.items.size() >= 2 && form.items[1].kind == SExpr::Kind::List
        && form.items[1].items.size() == 2 && form.items[1].items[0].isSymbol("inherit")) {
        auto base = asPackage(
            ev.eval(form.items[1].items[1], ev.globalEnv()), "inherit base");
        std::vector<std::pair<std::string, SExpr>> overrides;
        for (size_t i = 2; i < form.items.size(); i++) {
            const SExpr & field = form.items[i];
            if (field.kind != SExpr::Kind::List || field.items.size() != 2
                || field.items[0].kind != SExpr::Kind::Symbol)
                fail("ParseError",
                    "malformed package field (" + locationOf(field, file).display() + ")");
            overrides.emplace_back(field.items[0].atom, field);
        }
        return inheritPackage(base, overrides, ev, loc);
    }

    auto p = std::make_shared<Package>();
    p->location = loc;
    std::set<std::string> seen;
    for (size_t i = 1; i < form.items.size(); i++) {
        applyField(ev, *p, form.items[i], file);
        seen.insert(form.items[i].items[0].atom);
    }
    for (const char * required : {"name", "version", "source", "build-system", "synopsis",
             "description", "home-page", "license"})
        if (!seen.count(required))
            fail("MissingField", std::string(required) + " (" + loc.display() + ")");
    if (p->name.empty() || p->version.empty())
        fail("ArgumentError", "empty package name or version (" + loc.display() + ")");
    return p;
}

void installPackageBuiltins(Evaluator & ev, const Registry * registry)
{
    auto builtin = [&](std::string name, BuiltinFn fn) {
        auto v = std::make_shared<Value>();
        v->kind = Value::Kind::Builtin;
        v->builtin = std::make_shared<Builtin>(Builtin{name, std::move(fn)});
        ev.define(name, v);
    };
    builtin("current-system", [](std::vector<ValuePtr> & args, Evaluator &) -> ValuePtr {
        if (!args.empty())
            fail("ArityError", "current-system takes no arguments");
        return makeString(CurrentSystemScope::current());
    });
    builtin("registry-ref", [registry](std::vector<ValuePtr> & args, Evaluator &) -> ValuePtr {
        if (args.size() != 1 || args[0]->kind != Value::Kind::String)
            fail("ArityError", "registry-ref expects one string");
        if (!registry)
            fail("PackageNotFound", "no registry available for registry-ref");
        auto p = registry->find(args[0]->str);
        return makeOpaque("package", p);
    });
}

}

ValuePtr FieldThunk::force(const std::string & system) const
{
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(system);
    if (it != cache_.end())
        return it->second;
    CurrentSystemScope scope(system);
    Evaluator ev;
    auto v = ev.eval(expr_, env_);
    cache_[system] = v;
    return v;
}

CurrentSystemScope::CurrentSystemScope(std::string system)
{
    systemStack.push_back(std::move(system));
}

CurrentSystemScope::~CurrentSystemScope()
{
    systemStack.pop_back();
}

std::string CurrentSystemScope::current()
{
    if (systemStack.empty())
        fail("ArgumentError", "current-system used outside package compilation");
    return systemStack.back();
}

std::vector<std::pair<std::string, PackagePtr>> Package::forcedInputs(
    const std::string & system) const
{
    std::vector<std::pair<std::string, PackagePtr>> result;
    if (!inputs)
        return result;
    auto v = inputs->force(system);
    if (v->kind != Value::Kind::List)
        fail("TypeError", "inputs of `" + name + "' must be a list");
    std::set<std::string> labels;
    for (auto & item : v->items) {
        if (item->kind != Value::Kind::List || item->items.size() != 2
            || item->items[0]->kind != Value::Kind::String)
            fail("TypeError", "input of `" + name + "' must be (\"label\" package)");
        if (!labels.insert(item->items[0]->str).second)
            fail("ArgumentError",
                "duplicate input label `" + item->items[0]->str + "' in " + name);
        result.emplace_back(item->items[0]->str, asPackage(item->items[1], "input"));
    }
    return result;
}

SExpr Package::forcedArguments(const std::string & system) const
{
    if (!arguments)
        return SExpr::list();
    return valueToSExpr(*arguments->force(system));
}

PackagePtr inheritPackage(const PackagePtr & base,
    const std::vector<std::pair<std::string, SExpr>> & overrides, Evaluator & ev,
    Location location)
{
    auto p = std::make_shared<Package>(*base);
    p->location = location;
    const auto & known = packageFieldNames();
    for (auto & [fname, field] : overrides) {
        if (std::find(known.begin(), known.end(), fname) == known.end())
            fail("UnknownField", "unknown package field `" + fname + "'");
        applyField(ev, *p, field, location.file);
    }
    return p;
}

std::vector<std::pair<std::string, PackagePtr>> parsePackageFile(
    const std::filesystem::path & path, const Registry * registry)
{
    auto forms = parseSExprs(util::readFile(path));
    Evaluator ev;
    installPackageBuiltins(ev, registry);

    std::vector<std::pair<std::string, PackagePtr>> result;
    for (auto & form : forms) {
        if (form.kind != SExpr::Kind::List || form.items.size() != 3
            || !form.items[0].isSymbol("define") || form.items[1].kind != SExpr::Kind::Symbol)
            fail("ParseError", "package files contain only top-level defines ("
                    + locationOf(form, path.string()).display() + ")");
        const std::string & binding = form.items[1].atom;
        const SExpr & body = form.items[2];
        if (body.kind == SExpr::Kind::List && !body.items.empty()
            && body.items[0].isSymbol("package")) {
            auto p = parsePackageForm(ev, body, path.string());
            ev.define(binding, makeOpaque("package", p));
            result.emplace_back(binding, p);
        } else if (body.kind == SExpr::Kind::List && !body.items.empty()
            && body.items[0].isSymbol("origin")) {
            auto o = std::make_shared<Origin>(parseOriginForm(ev, body, path.string()));
            ev.define(binding, makeOpaque("origin", o));
        } else {
            fail("ParseError", "top-level define must bind a package or origin ("
                    + locationOf(form, path.string()).display() + ")");
        }
    }
    return result;
}

int compareVersions(const std::string & a, const std::string & b)
{
    auto as = util::split(a, '.'), bs = util::split(b, '.');
    auto numeric = [](const std::string & s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
            return std::isdigit(c);
        });
    };
    for (size_t i = 0; i < std::max(as.size(), bs.size()); i++) {
        if (i >= as.size())
            return -1;
        if (i >= bs.size())
            return 1;
        if (numeric(as[i]) && numeric(bs[i])) {
            long long x = std::stoll(as[i]), y = std::stoll(bs[i]);
            if (x != y)
                return x < y ? -1 : 1;
        } else if (as[i] != bs[i]) {
            return as[i] < bs[i] ? -1 : 1;
        }
    }
    return 0;
}

void Registry::addPackage(const PackagePtr & p)
{
    std::string key = p->name + "@" + p->version;
    if (!byNameVersion_.emplace(key, p).second)
        fail("ArgumentError", "duplicate package " + key);
}

void Registry::loadDirectory(const std::filesystem::path & dir)
{
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (auto & entry : std::filesystem::directory_iterator(dir, ec))
        if (entry.path().extension() == ".pkg")
            files.push_back(entry.path());
    if (ec)
        fail("IoError", "cannot read package directory " + dir.string());
    std::sort(files.begin(), files.end());
    for (auto & f : files)
        for (auto & [binding, p] : parsePackageFile(f, this))
            addPackage(p);
}

PackagePtr Registry::find(const std::string & spec) const
{
    auto at = spec.find('@');
    if (at != std::string::npos) {
        auto it = byNameVersion_.find(spec);
        if (it == byNameVersion_.end())
            fail("PackageNotFound", "package " + spec + " not found");
        return it->second;
    }
    PackagePtr best;
    for (auto & [key, p] : byNameVersion_)
        if (p->name == spec && (!best || compareVersions(p->version, best->version) > 0))
            best = p;
    if (!best)
        fail("PackageNotFound", "package " + spec + " not found");
    return best;
}

std::vector<PackagePtr> Registry::all() const
{
    std::vector<PackagePtr> result;
    for (auto & [key, p] : byNameVersion_)
        result.push_back(p);
    std::sort(result.begin(), result.end(), [](const PackagePtr & a, const PackagePtr & b) {
        if (a->name != b->name)
            return a->name < b->name;
        return compareVersions(a->version, b->version) < 0;
    });
    return result;
}

std::pair<StorePath, Derivation> originDerivation(Store & store, const Origin & origin,
    const std::string & nameHint, const std::string & system)
{
    std::vector<std::pair<std::string, std::string>> env = {
        {"expected-sha256", base32Encode(origin.sha256.data(), origin.sha256.size())}};
    if (origin.method == "seed") {
        env.emplace_back("text", origin.uri);
        return derivation(
            store, nameHint + "-source", system, builtinWriteText, {}, std::move(env), {}, {});
    }

    /* local-file */
    std::string uri = origin.uri;
    if (uri.rfind("file://", 0) == 0)
        uri = uri.substr(7);
    std::filesystem::path file = uri;
    if (!std::filesystem::exists(std::filesystem::symlink_status(file)))
        fail("IoError", "origin file " + file.string() + " does not exist");
    std::string baseName = file.filename().string();
    if (!isValidStoreName(baseName))
        baseName = nameHint + "-file";
    auto interned =
        store.addToStore(baseName, file, std::filesystem::is_directory(file));
    return derivation(store, nameHint + "-source", system, builtinUnpackSeed, {},
        std::move(env), {}, {interned.rendered});
}

namespace {

using DrvKey = std::tuple<std::string, const Package *, std::string>;
std::mutex drvMemoMutex;
std::map<DrvKey, std::pair<StorePath, Derivation>> drvMemo;
thread_local std::set<DrvKey> drvInProgress;

}

std::pair<StorePath, Derivation> packageDerivation(Store & store, const PackagePtr & package,
    const std::string & system, const std::vector<std::filesystem::path> & moduleSearchPath)
{
    DrvKey key{store.rootDir(), package.get(), system};
    {
        std::lock_guard<std::mutex> lock(drvMemoMutex);
        auto it = drvMemo.find(key);
        if (it != drvMemo.end())
            return it->second;
    }
    if (!drvInProgress.insert(key).second)
        fail("DependencyCycle", "package input cycle through " + package->name);

    try {
        CurrentSystemScope scope(system);
        const BuildSystem & bs = BuildSystems::instance().get(package->buildSystem);

        std::string fullName = package->name + "-" + package->version;
        auto [sourceDrvPath, sourceDrv] =
            originDerivation(store, package->source, fullName, system);

        auto inputs = package->forcedInputs(system);
        for (auto & pi : package->propagatedInputs)
            inputs.push_back(pi);
        std::vector<std::pair<std::string, std::string>> inputDrvPairs;
        for (auto & [label, dep] : inputs) {
            auto [depPath, depDrv] = packageDerivation(store, dep, system, moduleSearchPath);
            inputDrvPairs.emplace_back(label, depPath.rendered);
        }

        auto result = buildSystemBuild(store, bs, fullName, system, sourceDrvPath.rendered,
            inputDrvPairs, package->forcedArguments(system), moduleSearchPath);

        drvInProgress.erase(key);
        std::lock_guard<std::mutex> lock(drvMemoMutex);
        drvMemo.emplace(key, result);
        return result;
    } catch (...) {
        drvInProgress.erase(key);
        throw;
    }
}

}
