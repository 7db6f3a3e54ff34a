#include "fpm/config.hpp"
#include "fpm/derivation.hpp"
#include "fpm/engine.hpp"
#include "fpm/error.hpp"
#include "fpm/gc.hpp"
#include "fpm/package.hpp"
#include "fpm/profile.hpp"
#include "fpm/store.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <set>

using namespace fpm;

namespace {

/* Error kinds that mean "the build itself failed" (exit 2) as opposed to a
   user error (exit 1). */
bool isBuildError(const std::string & kind)
{
    static const std::set<std::string> kinds = {"BuildFailed", "MissingOutput",
        "ImpurityDetected", "BuilderNotExecutable", "HashMismatch", "InvokeFailed"};
    return kinds.count(kind) > 0;
}

Registry loadRegistry(const CliConfig & config)
{
    Registry registry;
    if (!config.pkgPath.empty())
        registry.loadDirectory(config.pkgPath);
    return registry;
}

EngineOptions engineOptions(const CliConfig & config)
{
    EngineOptions opts;
    opts.system = config.system;
    opts.maxJobs = config.maxJobs;
    opts.stateDir = config.stateDir;
    return opts;
}

int cmdBuild(const CliConfig & config, const std::string & target)
{
    Store store(config.storeRoot);
    StorePath drvPath;
    if (target.rfind(config.storeRoot.string() + "/", 0) == 0 && target.size() > 4
        && target.substr(target.size() - 4) == ".drv") {
        drvPath = store.parseStorePath(target);
    } else {
        auto registry = loadRegistry(config);
        auto pkg = registry.find(target);
        drvPath = packageDerivation(store, pkg, config.system, config.modulePath).first;
    }

    Engine engine(store, engineOptions(config));
    auto results = engine.buildDerivations({drvPath});
    std::cerr << "builders executed: " << engine.buildersExecuted() << "\n";
    for (auto & r : results) {
        if (r.status != BuildStatus::Failed)
            continue;
        std::cerr << "build of " << r.drvPath << " failed: " << r.error << "\n";
        auto hash = store.parseStorePath(r.drvPath).hash;
        std::cerr << "log: " << (config.stateDir / "logs" / (hash + ".log")).string()
                  << "\n";
        return 2;
    }
    for (auto & r : results)
        if (r.drvPath == drvPath.rendered)
            std::cout << r.outputPath << "\n";
    return 0;
}

int cmdGraph(const CliConfig & config, const std::string & target)
{
    Store store(config.storeRoot);
    auto registry = loadRegistry(config);
    auto pkg = registry.find(target);
    auto [drvPath, drv] = packageDerivation(store, pkg, config.system, config.modulePath);

    auto closure = inputClosure(store, {drvPath});
    std::cout << "digraph derivations {\n";
    for (auto & [path, d] : closure)
        std::cout << "  \"" << path.rendered << "\" [label=\"" << d.name << "\"];\n";
    for (auto & [path, d] : closure)
        for (auto & input : d.inputs)
            std::cout << "  \"" << path.rendered << "\" -> \"" << input.drvPath << "\";\n";
    std::cout << "}\n";
    return 0;
}

struct PackageFlags
{
    std::vector<std::string> install, remove;
    std::string upgrade;
    bool upgradeGiven = false;
    bool rollBack = false;
    std::string listInstalled, listAvailable;
    bool listInstalledGiven = false, listAvailableGiven = false;
};

int cmdPackage(const CliConfig & config, const PackageFlags & flags)
{
    bool transactional =
        !flags.install.empty() || !flags.remove.empty() || flags.upgradeGiven;
    if (flags.rollBack && transactional) {
        std::cerr << "error: --roll-back cannot be combined with other actions\n";
        return 1;
    }

    Store store(config.storeRoot);
    Profile profile(store, config.stateDir, config.user);

    if (flags.rollBack) {
        auto g = profile.rollBack();
        std::cerr << "switched to generation " << g.number << "\n";
        return 0;
    }

    if (transactional) {
        auto registry = loadRegistry(config);
        std::vector<Action> actions;
        for (auto & spec : flags.install)
            actions.push_back(Action::install(registry.find(spec)));
        for (auto & name : flags.remove)
            actions.push_back(Action::remove(name));
        if (flags.upgradeGiven)
            actions.push_back(Action::upgrade(flags.upgrade));

        auto g = profile.transact(actions, registry, engineOptions(config), config.modulePath);
        if (g)
            std::cerr << "switched to generation " << g->number << "\n";
        else
            std::cerr << "nothing to do\n";
    }

    if (flags.listInstalledGiven)
        for (auto & row : profile.listInstalled(flags.listInstalled))
            std::cout << row[0] << "\t" << row[1] << "\t" << row[2] << "\n";

    if (flags.listAvailableGiven) {
        auto registry = loadRegistry(config);
        for (auto & row : listAvailable(registry, flags.listAvailable))
            std::cout << row[0] << "\t" << row[1] << "\t" << row[2] << "\n";
    }

    if (!transactional && !flags.listInstalledGiven && !flags.listAvailableGiven) {
        std::cerr << "error: no action given\n";
        return 1;
    }
    return 0;
}

}

int main(int argc, char ** argv)
{
    CLI::App app{"fpm, a miniature functional package manager"};
    app.require_subcommand(1);

    CliFlags flags;
    app.add_option("--store", flags.storeRoot, "store root directory");
    app.add_option("--state", flags.stateDir, "state directory");
    app.add_option("--system", flags.system, "system identifier");
    app.add_option("--max-jobs", flags.maxJobs, "parallel build slots");
    app.add_option("--pkg-path", flags.pkgPath, "package file directory");
    app.add_option("--module-path", flags.modulePath, "build module search path (colon-separated)");
    app.add_option("--user", flags.user, "profile user name");

    auto * pkgCmd = app.add_subcommand("package", "manage the user profile");
    PackageFlags pf;
    pkgCmd->add_option("--install,-i", pf.install, "install a package (NAME or NAME@VERSION)");
    pkgCmd->add_option("--remove,-r", pf.remove, "remove an installed package");
    auto * upgradeOpt =
        pkgCmd->add_option("--upgrade,-u", pf.upgrade, "upgrade installed packages matching REGEX")
            ->expected(0, 1);
    pkgCmd->add_flag("--roll-back", pf.rollBack, "switch to the previous generation");
    auto * listInstOpt =
        pkgCmd->add_option("--list-installed,-I", pf.listInstalled, "list installed packages")
            ->expected(0, 1);
    auto * listAvailOpt =
        pkgCmd->add_option("--list-available,-A", pf.listAvailable, "list available packages")
            ->expected(0, 1);

    auto * buildCmd = app.add_subcommand("build", "build a package or .drv file");
    std::string buildTarget;
    buildCmd->add_option("target", buildTarget, "package name or .drv store path")->required();

    auto * gcCmd = app.add_subcommand("gc", "collect garbage");
    bool dryRun = false;
    gcCmd->add_flag("--dry-run", dryRun, "report without deleting");

    auto * graphCmd = app.add_subcommand("graph", "print a package's derivation DAG as DOT");
    std::string graphTarget;
    graphCmd->add_option("target", graphTarget, "package name")->required();

    auto * configCmd = app.add_subcommand("config", "print the resolved configuration");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        CliConfig config = resolveConfig(flags);

        if (configCmd->parsed()) {
            std::cout << config.display();
            return 0;
        }
        if (buildCmd->parsed())
            return cmdBuild(config, buildTarget);
        if (gcCmd->parsed()) {
            Store store(config.storeRoot);
            auto report = runGc(store, config.stateDir, dryRun);
            std::cout << formatGcReport(report) << "\n";
            return 0;
        }
        if (graphCmd->parsed())
            return cmdGraph(config, graphTarget);
        if (pkgCmd->parsed()) {
            pf.upgradeGiven = upgradeOpt->count() > 0;
            pf.listInstalledGiven = listInstOpt->count() > 0;
            pf.listAvailableGiven = listAvailOpt->count() > 0;
            return cmdPackage(config, pf);
        }
        std::cerr << "error: no command\n";
        return 1;
    } catch (const Error & e) {
        std::cerr << "error: " << e.what() << "\n";
        return isBuildError(e.kind()) ? 2 : 1;
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
