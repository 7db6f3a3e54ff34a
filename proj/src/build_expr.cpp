#include "fpm/build_expr.hpp"
#include "fpm/error.hpp"
#include "fpm/util.hpp"

#include <random>

namespace fs = std::filesystem;

namespace fpm {

StorePath internInterpreterSeed(Store & store)
{
    return store.addTextToStore("buildlang", "fpm build language interpreter seed 1\n");
}

fs::path findModuleFile(const std::string & name,
    const std::vector<fs::path> & searchPath)
{
    for (auto & dir : searchPath) {
        fs::path candidate = dir / (name + ".bl");
        if (fs::is_regular_file(candidate)) return candidate;
    }
    fail("IoError", "module '" + name + "' not found in module search path");
}

static std::string renderBuildInputs(
    Store & store, const std::vector<std::pair<std::string, std::string>> & inputPairs)
{
    std::vector<SExpr> entries;
    for (auto & [label, drvPath] : inputPairs) {
        auto drv = parseDrv(util::readFile(store.parseStorePath(drvPath).rendered));
        entries.push_back(
            SExpr::list({SExpr::string(label), SExpr::string(drv.outputPath)}));
    }
    return printSExpr(SExpr::list(std::move(entries)));
}

std::pair<StorePath, Derivation> buildExpressionToDerivation(Store & store,
    const std::string & name, const std::string & system, const SExpr & builderExpr,
    const std::vector<std::pair<std::string, std::string>> & inputPairs,
    const std::vector<std::string> & modules,
    const std::vector<fs::path> & moduleSearchPath)
{
    StorePath seed = internInterpreterSeed(store);

    std::vector<DerivationInput> inputs;
    auto allPairs = inputPairs;

    if (!modules.empty()) {
        /* Stage the module sources, parse-checking each one, and intern the
           tree. */
        static std::mt19937_64 rng{std::random_device{}()};
        fs::path staging = fs::temp_directory_path() / ("fpm-modules-" + std::to_string(rng()));
        fs::create_directories(staging);
        for (auto & m : modules) {
            fs::path src = findModuleFile(m, moduleSearchPath);
            std::string text = util::readFile(src);
            parseSExprs(text); // reject unparsable modules up front
            util::writeFile(staging / (m + ".bl"), text);
        }
        StorePath moduleTree = store.addToStore("module-import-source", staging, true);
        util::deleteRecursive(staging);

        auto [importPath, importDrv] = derivation(store, "module-import", system,
            builtinUnpackSeed, {}, {}, {}, {moduleTree.rendered});

        /* The "compiled" form is a verbatim copy made in the build stratum;
           it gives the graph the seed -> import -> compiled chain. */
        SExpr copyExpr = parseSExpr(
            "(copy-recursively (assoc-ref %build-inputs \"module-import\") %output)");
        auto [compiledPath, compiledDrv] = buildExpressionToDerivation(store,
            "module-import-compiled", system, copyExpr,
            {{"module-import", importPath.rendered}}, {}, moduleSearchPath);

        allPairs.emplace_back("module-import", importPath.rendered);
        allPairs.emplace_back("module-import-compiled", compiledPath.rendered);
    }

    for (auto & [label, drvPath] : allPairs) inputs.push_back({drvPath, label});

    std::vector<std::pair<std::string, std::string>> env;
    env.emplace_back("expr", printSExpr(builderExpr));
    env.emplace_back("build-inputs", renderBuildInputs(store, allPairs));
    if (!modules.empty()) {
        std::string names;
        for (auto & m : modules) names += (names.empty() ? "" : " ") + m;
        env.emplace_back("modules", names);
    }

    return derivation(store, name, system, seed.rendered, {}, std::move(env),
        std::move(inputs), {seed.rendered});
}

}
