#include "fpm/derivation.hpp"
#include "fpm/error.hpp"
#include "fpm/util.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <set>

namespace fpm {

bool isBuiltinTag(std::string_view builder)
{
    return builder == builtinWriteText || builder == builtinUnpackSeed;
}

std::string Derivation::envValue(const std::string & key) const
{
    for (auto & [k, v] : env)
        if (k == key) return v;
    return "";
}

static SExpr toSExpr(const Derivation & d)
{
    std::vector<SExpr> args;
    for (auto & a : d.args) args.push_back(SExpr::string(a));

    std::vector<SExpr> env;
    for (auto & [k, v] : d.env)
        env.push_back(SExpr::list({SExpr::string(k), SExpr::string(v)}));

    std::vector<SExpr> inputs;
    for (auto & in : d.inputs)
        inputs.push_back(SExpr::list({SExpr::string(in.label), SExpr::string(in.drvPath)}));

    std::vector<SExpr> sources;
    for (auto & s : d.sources) sources.push_back(SExpr::string(s));

    auto field = [](const char * name, std::vector<SExpr> rest) {
        std::vector<SExpr> items{SExpr::symbol(name)};
        for (auto & r : rest) items.push_back(std::move(r));
        return SExpr::list(std::move(items));
    };

    return SExpr::list({
        SExpr::symbol("derivation"),
        field("name", {SExpr::string(d.name)}),
        field("system", {SExpr::string(d.system)}),
        field("builder", {SExpr::string(d.builder)}),
        field("args", std::move(args)),
        field("env", std::move(env)),
        field("inputs", std::move(inputs)),
        field("sources", std::move(sources)),
        field("output", {SExpr::string(d.outputPath)}),
    });
}

std::string writeDrv(const Derivation & d)
{
    return printSExpr(toSExpr(d));
}

static const std::string & expectString(const SExpr & e, const char * what)
{
    if (e.kind != SExpr::Kind::String)
        fail("ParseError", std::string("expected a string for ") + what);
    return e.atom;
}

Derivation parseDrv(std::string_view bytes)
{
    SExpr top = parseSExpr(bytes);
    if (top.kind != SExpr::Kind::List || top.items.empty()
        || !top.items[0].isSymbol("derivation"))
        fail("ParseError", "not a derivation s-expression");

    Derivation d;
    std::set<std::string> seen;
    for (size_t i = 1; i < top.items.size(); ++i) {
        const SExpr & f = top.items[i];
        if (f.kind != SExpr::Kind::List || f.items.empty()
            || f.items[0].kind != SExpr::Kind::Symbol)
            fail("ParseError", "malformed derivation field");
        const std::string & name = f.items[0].atom;
        if (!seen.insert(name).second)
            fail("ParseError", "duplicate derivation field '" + name + "'");
        auto values = [&]() -> std::vector<SExpr> {
            return {f.items.begin() + 1, f.items.end()};
        };
        auto single = [&]() -> const SExpr & {
            if (f.items.size() != 2)
                fail("ParseError", "field '" + name + "' takes exactly one value");
            return f.items[1];
        };
        if (name == "name") {
            d.name = expectString(single(), "name");
        } else if (name == "system") {
            d.system = expectString(single(), "system");
        } else if (name == "builder") {
            d.builder = expectString(single(), "builder");
        } else if (name == "args") {
            for (auto & v : values()) d.args.push_back(expectString(v, "args"));
        } else if (name == "env") {
            for (auto & v : values()) {
                if (v.kind != SExpr::Kind::List || v.items.size() != 2)
                    fail("ParseError", "env entries must be (key value) pairs");
                d.env.emplace_back(expectString(v.items[0], "env key"),
                    expectString(v.items[1], "env value"));
            }
        } else if (name == "inputs") {
            for (auto & v : values()) {
                if (v.kind != SExpr::Kind::List || v.items.size() != 2)
                    fail("ParseError", "input entries must be (label drv-path) pairs");
                d.inputs.push_back({expectString(v.items[1], "input path"),
                    expectString(v.items[0], "input label")});
            }
        } else if (name == "sources") {
            for (auto & v : values()) d.sources.push_back(expectString(v, "sources"));
        } else if (name == "output") {
            d.outputPath = expectString(single(), "output");
        } else {
            fail("UnknownField", "unknown derivation field '" + name + "'");
        }
    }
    for (const char * required : {"name", "system", "builder", "output"})
        if (!seen.count(required))
            fail("ParseError", std::string("missing derivation field '") + required + "'");
    return d;
}

static const std::string placeholder(32, '0');

Derivation makeDerivation(const std::string & rootDir, std::string name, std::string system,
    std::string builder, std::vector<std::string> args,
    std::vector<std::pair<std::string, std::string>> env, std::vector<DerivationInput> inputs,
    std::vector<std::string> sources)
{
    if (!isValidStoreName(name))
        fail("InvalidName", "invalid derivation name '" + name + "'");
    std::set<std::string> keys;
    for (auto & [k, v] : env) {
        if (k == "out") fail("ReservedKey", "env key 'out' is reserved");
        if (!keys.insert(k).second)
            fail("ReservedKey", "duplicate env key '" + k + "'");
    }

    /* The builder file is itself an input of the build. */
    if (!isBuiltinTag(builder)
        && std::find(sources.begin(), sources.end(), builder) == sources.end())
        sources.push_back(builder);

    Derivation d;
    d.name = std::move(name);
    d.system = std::move(system);
    d.builder = std::move(builder);
    d.args = std::move(args);
    d.env = std::move(env);
    d.inputs = std::move(inputs);
    d.sources = std::move(sources);
    std::sort(d.inputs.begin(), d.inputs.end(),
        [](auto & a, auto & b) { return std::tie(a.label, a.drvPath) < std::tie(b.label, b.drvPath); });
    std::sort(d.sources.begin(), d.sources.end());
    d.sources.erase(std::unique(d.sources.begin(), d.sources.end()), d.sources.end());

    /* Break the output-path circularity: hash the serialization with an
       all-zero stand-in, then substitute the real path. */
    d.env.emplace_back("out", placeholder);
    d.outputPath = placeholder;
    auto digest = sha256(writeDrv(d));
    d.outputPath = makeStorePathRendered(rootDir, "output:out", digest, d.name);
    d.env.back().second = d.outputPath;
    return d;
}

void checkSelfDescribing(const std::string & rootDir, const Derivation & d,
    const std::vector<std::string> & inputOutputs)
{
    std::set<std::string> allowed(d.sources.begin(), d.sources.end());
    for (auto & in : d.inputs) allowed.insert(in.drvPath);
    for (auto & o : inputOutputs) allowed.insert(o);
    allowed.insert(d.outputPath);

    auto checkText = [&](const std::string & text) {
        std::string prefix = rootDir + "/";
        size_t pos = 0;
        while ((pos = text.find(prefix, pos)) != std::string::npos) {
            size_t end = pos + prefix.size();
            while (end < text.size()
                && (std::isalnum(static_cast<unsigned char>(text[end])) || text[end] == '.'
                    || text[end] == '+' || text[end] == '-' || text[end] == '_'))
                end++;
            std::string candidate = text.substr(pos, end - pos);
            if (!allowed.count(candidate))
                fail("ClosureViolation",
                    "derivation '" + d.name + "' mentions undeclared store path '" + candidate
                        + "'");
            pos = end;
        }
    };

    for (auto & a : d.args) checkText(a);
    for (auto & [k, v] : d.env) checkText(v);
}

namespace {
std::mutex memoMutex;
std::map<std::string, std::pair<StorePath, Derivation>> memoTable;
}

std::pair<StorePath, Derivation> derivation(Store & store, std::string name, std::string system,
    std::string builder, std::vector<std::string> args,
    std::vector<std::pair<std::string, std::string>> env, std::vector<DerivationInput> inputs,
    std::vector<std::string> sources)
{
    if (!isBuiltinTag(builder)) {
        auto p = store.parseStorePath(builder);
        if (!store.isValidPath(p))
            fail("ClosureViolation", "builder '" + builder + "' is not a valid store path");
    }

    std::vector<StorePath> refs;
    std::vector<std::string> inputOutputs;
    for (auto & in : inputs) {
        auto p = store.parseStorePath(in.drvPath);
        if (p.name.size() < 4 || p.name.substr(p.name.size() - 4) != ".drv")
            fail("ClosureViolation", "input '" + in.drvPath + "' is not a .drv path");
        if (!store.isValidPath(p))
            fail("ClosureViolation", "dangling input '" + in.drvPath + "'");
        inputOutputs.push_back(parseDrv(util::readFile(p.rendered)).outputPath);
        refs.push_back(p);
    }
    for (auto & s : sources) {
        auto p = store.parseStorePath(s);
        if (!store.isValidPath(p))
            fail("ClosureViolation", "dangling source '" + s + "'");
        refs.push_back(p);
    }

    Derivation d = makeDerivation(store.rootDir(), std::move(name), std::move(system),
        std::move(builder), std::move(args), std::move(env), std::move(inputs),
        std::move(sources));
    if (!isBuiltinTag(d.builder))
        refs.push_back(store.parseStorePath(d.builder));
    checkSelfDescribing(store.rootDir(), d, inputOutputs);

    std::string bytes = writeDrv(d);
    {
        std::lock_guard<std::mutex> guard(memoMutex);
        auto it = memoTable.find(bytes);
        if (it != memoTable.end()) return it->second;
    }

    StorePath drvPath = store.addTextToStore(d.name + ".drv", bytes, "derivation", refs);
    std::pair<StorePath, Derivation> result{drvPath, d};
    std::lock_guard<std::mutex> guard(memoMutex);
    memoTable.emplace(std::move(bytes), result);
    return result;
}

std::vector<std::pair<StorePath, Derivation>> inputClosure(const Store & store,
    const std::vector<StorePath> & drvPaths)
{
    std::vector<std::pair<StorePath, Derivation>> order;
    std::set<std::string> done;
    std::set<std::string> visiting;
    std::vector<std::string> stack;

    std::function<void(const StorePath &)> visit = [&](const StorePath & p) {
        if (done.count(p.rendered)) return;
        if (visiting.count(p.rendered)) {
            std::string cycle;
            for (auto & s : stack) cycle += s + " -> ";
            fail("DependencyCycle", "dependency cycle: " + cycle + p.rendered);
        }
        visiting.insert(p.rendered);
        stack.push_back(p.rendered);
        Derivation d = parseDrv(util::readFile(p.rendered));
        std::vector<std::string> children;
        for (auto & in : d.inputs) children.push_back(in.drvPath);
        std::sort(children.begin(), children.end());
        children.erase(std::unique(children.begin(), children.end()), children.end());
        for (auto & c : children) visit(store.parseStorePath(c));
        stack.pop_back();
        visiting.erase(p.rendered);
        done.insert(p.rendered);
        order.emplace_back(p, std::move(d));
    };

    auto targets = drvPaths;
    std::sort(targets.begin(), targets.end());
    for (auto & t : targets) visit(t);
    return order;
}

}
