#include "fpm/engine.hpp"
#include "fpm/error.hpp"
#include "fpm/eval.hpp"
#include "fpm/util.hpp"

#include <algorithm>
#include <condition_variable>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace fpm {

std::vector<StorePath> scanReferences(const fs::path & outputPath,
    const std::vector<StorePath> & candidates)
{
    std::vector<StorePath> found;
    std::set<std::string> foundHashes;

    auto scanText = [&](const std::string & text) {
        for (auto & c : candidates) {
            if (foundHashes.count(c.hash)) continue;
            if (text.find(c.hash) != std::string::npos) foundHashes.insert(c.hash);
        }
    };

    std::function<void(const fs::path &)> walk = [&](const fs::path & p) {
        auto st = fs::symlink_status(p);
        if (fs::is_symlink(st)) {
            scanText(fs::read_symlink(p).string());
        } else if (fs::is_regular_file(st)) {
            scanText(util::readFile(p));
        } else if (fs::is_directory(st)) {
            for (auto & entry : fs::directory_iterator(p)) {
                scanText(entry.path().filename().string());
                walk(entry.path());
            }
        }
    };
    walk(outputPath);

    for (auto & c : candidates)
        if (foundHashes.count(c.hash)) found.push_back(c);
    std::sort(found.begin(), found.end());
    found.erase(std::unique(found.begin(), found.end()), found.end());
    return found;
}

void checkClosure(const std::string & outputPath, const std::vector<StorePath> & scanned,
    const std::vector<std::string> & declared)
{
    std::set<std::string> allowed(declared.begin(), declared.end());
    allowed.insert(outputPath);
    std::string offending;
    for (auto & s : scanned)
        if (!allowed.count(s.rendered)) offending += (offending.empty() ? "" : ", ") + s.rendered;
    if (!offending.empty())
        fail("ImpurityDetected",
            "output '" + outputPath + "' references undeclared store paths: " + offending);
}

Engine::Engine(Store & store, EngineOptions options)
    : store_(store), options_(std::move(options))
{
    if (options_.stateDir.empty()) options_.stateDir = fs::temp_directory_path() / "fpm-state";
    fs::create_directories(options_.stateDir / "logs");
    fs::create_directories(options_.stateDir / "tmp");
    if (options_.maxJobs == 0) options_.maxJobs = 1;
}

void Engine::runBuilder(const Derivation & d, const fs::path & buildDir, std::string & log)
{
    std::map<std::string, std::string> env(d.env.begin(), d.env.end());

    if (d.builder == builtinWriteText) {
        util::writeFile(d.outputPath, d.envValue("text"));
        return;
    }

    if (d.builder == builtinUnpackSeed) {
        if (d.sources.size() != 1)
            fail("BuildFailed",
                "builtin:unpack-seed needs exactly one source, got "
                    + std::to_string(d.sources.size()));
        util::copyRecursive(d.sources[0], d.outputPath);
        util::makeWritableRecursive(d.outputPath);
        return;
    }

    StorePath builderPath = store_.parseStorePath(d.builder);

    /* Output paths of the input derivations, visible to the build. */
    std::vector<std::string> inputOutputs;
    for (auto & in : d.inputs) {
        auto drv = parseDrv(util::readFile(in.drvPath));
        inputOutputs.push_back(drv.outputPath);
    }

    if (builderPath.name == "buildlang") {
        /* The interpreter seed: the evaluator is part of the engine; the
           interned seed file only shapes the input graph. */
        Evaluator ev;
        ev.cwd = buildDir;
        ev.envMap = env;
        std::ostringstream logStream;
        ev.log = &logStream;
        for (auto & o : inputOutputs) ev.searchPath.push_back(fs::path(o) / "bin");

        ev.define("%output", makeString(d.envValue("out")));
        std::string buildInputs = d.envValue("build-inputs");
        ev.define("%build-inputs",
            buildInputs.empty() ? makeList({}) : sexprToValue(parseSExpr(buildInputs)));

        try {
            /* Helper modules were imported by an auxiliary derivation;
               load them from its output. */
            std::string moduleNames = d.envValue("modules");
            if (!moduleNames.empty()) {
                std::string moduleDir;
                for (auto & in : d.inputs)
                    if (in.label == "module-import-compiled")
                        moduleDir = parseDrv(util::readFile(in.drvPath)).outputPath;
                if (moduleDir.empty())
                    fail("BuildFailed", "modules requested but no module-import input");
                for (auto & name : util::split(moduleNames, ' ')) {
                    if (name.empty()) continue;
                    auto forms =
                        parseSExprs(util::readFile(fs::path(moduleDir) / (name + ".bl")));
                    for (auto & form : forms) ev.evalTopLevel(form);
                }
            }

            auto forms = parseSExprs(d.envValue("expr"));
            ValuePtr result = makeUnit();
            for (auto & form : forms) result = ev.evalTopLevel(form);
            log += logStream.str();
            if (!result->truthy())
                fail("BuildFailed", "build expression returned false");
        } catch (...) {
            log += logStream.str();
            throw;
        }
        return;
    }

    /* External builder process. */
    if (!fs::is_regular_file(d.builder) || !util::isExecutable(d.builder))
        fail("BuilderNotExecutable", "builder '" + d.builder + "' is not executable");
    int status = util::runProcess(d.builder, d.args, env, buildDir, log);
    if (status != 0)
        fail("BuildFailed", "builder exited with status " + std::to_string(status));
}

BuildResult Engine::buildOne(const StorePath & drvPath, const Derivation & d)
{
    BuildResult result;
    result.drvPath = drvPath.rendered;
    result.outputPath = d.outputPath;

    StorePath output = store_.parseStorePath(d.outputPath);
    if (store_.isValidPath(output)) {
        result.status = BuildStatus::Cached;
        return result;
    }

    fs::path buildDir = options_.stateDir / "tmp" / (drvPath.hash + "-" + d.name);
    fs::path logFile = options_.stateDir / "logs" / (drvPath.hash + ".log");
    std::string log;

    auto finishLog = [&] {
        result.log = log;
        util::writeFile(logFile, log);
    };

    try {
        if (d.system != options_.system)
            fail("BuildFailed",
                "wrong system: derivation wants '" + d.system + "', engine is '"
                    + options_.system + "'");

        util::deleteRecursive(buildDir);
        fs::create_directories(buildDir);

        /* Snapshot the store so stray writes into it are detectable. */
        std::set<std::string> before;
        for (auto & entry : fs::directory_iterator(store_.rootDir()))
            before.insert(entry.path().filename().string());

        runBuilder(d, buildDir, log);

        if (!fs::exists(fs::symlink_status(d.outputPath)))
            fail("MissingOutput", "builder did not produce output '" + d.outputPath + "'");

        /* Post-build audit: no new store entries beside the output, and no
           references beyond the declared closure. */
        std::string outputBase = output.hash + "-" + output.name;
        for (auto & entry : fs::directory_iterator(store_.rootDir())) {
            std::string base = entry.path().filename().string();
            if (base.empty() || base[0] == '.' || base == outputBase) continue;
            if (before.count(base)) continue;
            StorePath stray;
            try {
                stray = store_.parseStorePath(store_.rootDir() + "/" + base);
            } catch (Error &) {
                fail("ImpurityDetected", "builder wrote stray file '" + base + "' into the store");
            }
            if (!store_.isValidPath(stray))
                fail("ImpurityDetected",
                    "builder wrote undeclared store entry '" + stray.rendered + "'");
        }

        std::string expected = d.envValue("expected-sha256");
        if (!expected.empty()) {
            Sha256 actual = fs::is_directory(d.outputPath)
                ? sha256(serializeTree(d.outputPath))
                : sha256File(d.outputPath);
            std::string actual32 = base32Encode(actual.data(), actual.size());
            if (actual32 != expected)
                fail("HashMismatch",
                    "output hash mismatch: expected " + expected + ", got " + actual32);
        }

        std::vector<std::string> declared{d.outputPath};
        for (auto & s : d.sources) declared.push_back(s);
        for (auto & in : d.inputs) {
            declared.push_back(in.drvPath);
            declared.push_back(parseDrv(util::readFile(in.drvPath)).outputPath);
        }

        auto candidates = store_.allValidPaths();
        candidates.push_back(output);
        auto scanned = scanReferences(d.outputPath, candidates);
        checkClosure(d.outputPath, scanned, declared);

        std::vector<StorePath> refs;
        for (auto & s : scanned) {
            result.scannedReferences.push_back(s.rendered);
            if (!(s == output)) refs.push_back(s);
        }
        store_.registerValid(output, refs);

        result.status = BuildStatus::Built;
        util::deleteRecursive(buildDir);
        finishLog();
    } catch (std::exception & e) {
        util::deleteRecursive(buildDir);
        if (fs::exists(fs::symlink_status(d.outputPath)) && !store_.isValidPath(output))
            util::deleteRecursive(d.outputPath);
        log += std::string(e.what()) + "\n";
        finishLog();
        result.status = BuildStatus::Failed;
        result.error = e.what();
    }
    return result;
}

std::vector<BuildResult> Engine::buildDerivations(const std::vector<StorePath> & targets)
{
    if (targets.empty()) return {};

    auto closure = inputClosure(store_, targets);

    struct Node
    {
        StorePath drvPath;
        Derivation drv;
        std::vector<size_t> dependents;
        size_t pendingInputs = 0;
        bool failedUpstream = false;
    };

    std::vector<Node> nodes;
    std::map<std::string, size_t> index;
    for (auto & [path, drv] : closure) {
        index[path.rendered] = nodes.size();
        nodes.push_back({path, drv, {}, 0, false});
    }
    for (size_t i = 0; i < nodes.size(); ++i) {
        std::set<std::string> seen;
        for (auto & in : nodes[i].drv.inputs) {
            if (!seen.insert(in.drvPath).second) continue;
            size_t dep = index.at(in.drvPath);
            nodes[dep].dependents.push_back(i);
            nodes[i].pendingInputs++;
        }
    }

    std::vector<BuildResult> results(nodes.size());
    std::mutex mutex;
    std::condition_variable cv;
    std::vector<size_t> ready;
    size_t remaining = nodes.size();
    size_t running = 0;

    for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].pendingInputs == 0) ready.push_back(i);

    auto markNotAttempted = [&](size_t i, auto && self) -> void {
        for (size_t dep : nodes[i].dependents) {
            if (nodes[dep].failedUpstream) continue;
            nodes[dep].failedUpstream = true;
            results[dep].drvPath = nodes[dep].drvPath.rendered;
            results[dep].outputPath = nodes[dep].drv.outputPath;
            results[dep].status = BuildStatus::NotAttempted;
            remaining--;
            self(dep, self);
        }
    };

    auto worker = [&] {
        std::unique_lock<std::mutex> lock(mutex);
        while (true) {
            cv.wait(lock, [&] { return !ready.empty() || (remaining == 0 && running == 0); });
            if (ready.empty()) {
                if (remaining == 0 && running == 0) return;
                continue;
            }
            /* Lowest closure index first keeps single-job builds in exact
               dependency order. */
            auto it = std::min_element(ready.begin(), ready.end());
            size_t i = *it;
            ready.erase(it);
            running++;

            bool cached = store_.isValidPath(store_.parseStorePath(nodes[i].drv.outputPath));
            if (!cached) events_.push_back({nodes[i].drvPath.rendered, true});
            lock.unlock();
            BuildResult r = buildOne(nodes[i].drvPath, nodes[i].drv);
            lock.lock();
            if (r.status == BuildStatus::Built) {
                buildersExecuted_++;
                events_.push_back({nodes[i].drvPath.rendered, false});
            }
            results[i] = r;
            running--;
            remaining--;
            if (r.status == BuildStatus::Failed) {
                markNotAttempted(i, markNotAttempted);
            } else {
                for (size_t dep : nodes[i].dependents)
                    if (!nodes[dep].failedUpstream && --nodes[dep].pendingInputs == 0)
                        ready.push_back(dep);
            }
            cv.notify_all();
        }
    };

    size_t jobs = std::min(options_.maxJobs, nodes.size());
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (size_t i = 0; i < jobs; ++i) threads.emplace_back(worker);
        for (auto & t : threads) t.join();
    }

    return results;
}

}
