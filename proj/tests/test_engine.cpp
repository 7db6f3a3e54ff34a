#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fpm/derivation.hpp"
#include "fpm/engine.hpp"
#include "fpm/error.hpp"
#include "fpm/store.hpp"
#include "fpm/util.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

using namespace fpm;
using namespace fpm::test;
namespace fs = std::filesystem;

namespace {

struct Fixture
{
    TempDir dir{"engine"};
    Store store{dir / "store"};
    Engine engine{store, testEngineOptions(dir / "state")};

    std::pair<StorePath, Derivation> writeText(const std::string & name,
        const std::string & text, std::vector<DerivationInput> inputs = {})
    {
        return derivation(store, name, "x86_64-linux", builtinWriteText, {},
            {{"text", text}}, std::move(inputs), {});
    }

    const BuildResult & resultFor(
        const std::vector<BuildResult> & results, const StorePath & drv)
    {
        for (auto & r : results)
            if (r.drvPath == drv.rendered)
                return r;
        REQUIRE(false);
        throw std::logic_error("unreachable");
    }
};

}

TEST_CASE("write-text builds and caches")
{
    Fixture f;
    auto [drv, d] = f.writeText("example-1.0", "hello\n");

    auto results = f.engine.buildDerivations({drv});
    REQUIRE(results.size() == 1);
    CHECK(results[0].status == BuildStatus::Built);
    CHECK(results[0].outputPath == d.outputPath);
    CHECK(util::readFile(d.outputPath) == "hello\n");
    CHECK(f.store.isValidPath(f.store.parseStorePath(d.outputPath)));
    CHECK(f.engine.buildersExecuted() == 1);

    Engine second(f.store, testEngineOptions(f.dir / "state"));
    auto again = second.buildDerivations({drv});
    CHECK(again[0].status == BuildStatus::Cached);
    CHECK(second.buildersExecuted() == 0);
}

TEST_CASE("empty target list")
{
    Fixture f;
    CHECK(f.engine.buildDerivations({}).empty());
}

TEST_CASE("unpack-seed copies the interned source")
{
    Fixture f;
    fs::create_directories(f.dir.path() / "seed" / "bin");
    util::writeFile(f.dir.path() / "seed" / "bin" / "tool", "#!/bin/sh\necho hi\n", true);
    auto seed = f.store.addToStore("seed-tree", f.dir / "seed", true);

    auto [drv, d] = derivation(f.store, "unpacked", "x86_64-linux", builtinUnpackSeed, {}, {},
        {}, {seed.rendered});
    auto results = f.engine.buildDerivations({drv});
    REQUIRE(results[0].status == BuildStatus::Built);
    CHECK(util::readFile(fs::path(d.outputPath) / "bin" / "tool") == "#!/bin/sh\necho hi\n");
    CHECK(util::isExecutable(fs::path(d.outputPath) / "bin" / "tool"));
}

TEST_CASE("external builder runs isolated with the declared env only")
{
    Fixture f;
    // a real shell interned as the "static bash" stand-in
    auto bash = f.store.addToStore("static-bash", fs::canonical("/bin/sh"), false);
    auto [drv, d] = derivation(f.store, "probe-1.0", "x86_64-linux", bash.rendered,
        {"-c", "echo \"HOME=[$HOME] MARK=[$MARK]\" > $out; pwd >&2"},
        {{"MARK", "declared"}}, {}, {bash.rendered});

    auto results = f.engine.buildDerivations({drv});
    REQUIRE(results[0].status == BuildStatus::Built);
    auto out = util::readFile(d.outputPath);
    CHECK(out.find("HOME=[]") != std::string::npos);        // host env invisible
    CHECK(out.find("MARK=[declared]") != std::string::npos); // declared env visible
    // cwd is a fresh build dir under the state tmp area (visible in the log)
    CHECK(results[0].log.find((f.dir.path() / "state" / "tmp").string())
        != std::string::npos);
}

TEST_CASE("missing output and nonzero exit are distinct failures")
{
    Fixture f;
    auto bash = f.store.addToStore("static-bash", fs::canonical("/bin/sh"), false);

    auto [lazy, lazyD] = derivation(f.store, "lazy", "x86_64-linux", bash.rendered,
        {"-c", "true"}, {}, {}, {bash.rendered});
    auto r1 = f.engine.buildDerivations({lazy});
    CHECK(r1[0].status == BuildStatus::Failed);
    CHECK(r1[0].error.find("MissingOutput") != std::string::npos);

    auto [angry, angryD] = derivation(f.store, "angry", "x86_64-linux", bash.rendered,
        {"-c", "echo stderr-detail >&2; exit 9"}, {}, {}, {bash.rendered});
    auto r2 = f.engine.buildDerivations({angry});
    CHECK(r2[0].status == BuildStatus::Failed);
    CHECK(r2[0].error.find("BuildFailed") != std::string::npos);

    // the log captured the builder's stderr
    CHECK(r2[0].log.find("stderr-detail") != std::string::npos);

    // failed outputs are not registered
    CHECK(!f.store.isValidPath(f.store.parseStorePath(angryD.outputPath)));
}

TEST_CASE("builder that is not executable")
{
    Fixture f;
    auto script = f.store.addTextToStore("limp-script", "#!/bin/sh\necho x > $out\n");
    auto [drv, d] = derivation(
        f.store, "limp", "x86_64-linux", script.rendered, {}, {}, {}, {script.rendered});
    auto results = f.engine.buildDerivations({drv});
    CHECK(results[0].status == BuildStatus::Failed);
    CHECK(results[0].error.find("BuilderNotExecutable") != std::string::npos);
}

TEST_CASE("wrong system fails the build")
{
    Fixture f;
    auto [drv, d] = derivation(
        f.store, "alien", "sparc-solaris", builtinWriteText, {}, {{"text", "x"}}, {}, {});
    auto results = f.engine.buildDerivations({drv});
    CHECK(results[0].status == BuildStatus::Failed);
    CHECK(results[0].error.find("wrong system") != std::string::npos);
}

TEST_CASE("expected-sha256 mismatch is reported")
{
    Fixture f;
    auto [drv, d] = derivation(f.store, "fixed-out", "x86_64-linux", builtinWriteText, {},
        {{"text", "payload"}, {"expected-sha256", std::string(52, 'z')}}, {}, {});
    auto results = f.engine.buildDerivations({drv});
    CHECK(results[0].status == BuildStatus::Failed);
    CHECK(results[0].error.find("HashMismatch") != std::string::npos);
}

TEST_CASE("diamond with failing middle: sibling built, sink not attempted")
{
    Fixture f;
    auto [dPath, dD] = f.writeText("base", "base");
    auto [bad, badD] = derivation(f.store, "bad-middle", "sparc-solaris", builtinWriteText, {},
        {{"text", "won't run"}}, {{dPath.rendered, "base"}}, {});
    auto [good, goodD] = f.writeText("good-middle", "fine");
    auto [sink, sinkD] = derivation(f.store, "sink", "x86_64-linux", builtinWriteText, {},
        {{"text", "top"}}, {{bad.rendered, "bad"}, {good.rendered, "good"}}, {});

    auto results = f.engine.buildDerivations({sink});
    CHECK(f.resultFor(results, dPath).status == BuildStatus::Built);
    CHECK(f.resultFor(results, bad).status == BuildStatus::Failed);
    CHECK(f.resultFor(results, good).status == BuildStatus::Built);
    CHECK(f.resultFor(results, sink).status == BuildStatus::NotAttempted);
}

TEST_CASE("max_jobs=1 follows closure order; parallel runs respect dependencies")
{
    for (size_t jobs : {size_t(1), size_t(4)}) {
        CAPTURE(jobs);
        TempDir dir("sched");
        Store store(dir / "store");

        std::mt19937 rng(99);
        const int n = 30;
        std::vector<StorePath> drvs;
        std::vector<std::set<int>> deps(n);
        for (int i = 0; i < n; i++) {
            std::vector<DerivationInput> inputs;
            if (i > 0) {
                size_t k = rng() % 3;
                while (deps[i].size() < k)
                    deps[i].insert(rng() % i);
                for (int j : deps[i])
                    inputs.push_back({drvs[j].rendered, "dep" + std::to_string(j)});
            }
            drvs.push_back(derivation(store, "n" + std::to_string(i), "x86_64-linux",
                builtinWriteText, {}, {{"text", std::to_string(i)}}, inputs, {})
                               .first);
        }

        Engine engine(store, testEngineOptions(dir / "state", "x86_64-linux", jobs));
        auto results = engine.buildDerivations({drvs[n - 1]});
        for (auto & r : results)
            if (r.status == BuildStatus::Failed)
                FAIL(r.error);

        // every start event is preceded by the finish of all inputs
        std::map<std::string, size_t> started, finished;
        const auto & events = engine.events();
        for (size_t i = 0; i < events.size(); i++)
            (events[i].start ? started : finished)[events[i].drvPath] = i;
        for (int i = 0; i < n; i++)
            for (int j : deps[i])
                if (started.count(drvs[i].rendered) && finished.count(drvs[j].rendered))
                    CHECK(finished[drvs[j].rendered] < started[drvs[i].rendered]);

        if (jobs == 1) {
            // serial order is exactly the closure order
            auto closure = inputClosure(store, {drvs[n - 1]});
            std::vector<std::string> expected;
            for (auto & [p, d] : closure)
                expected.push_back(p.rendered);
            std::vector<std::string> actual;
            for (auto & e : events)
                if (e.start)
                    actual.push_back(e.drvPath);
            CHECK(actual == expected);
        }
    }
}

TEST_CASE("scan_references planting oracle")
{
    std::mt19937 rng(4242);
    for (int trial = 0; trial < 100; trial++) {
        TempDir out("scan");
        size_t n = 1 + rng() % 50;
        std::vector<StorePath> candidates;
        for (size_t i = 0; i < n; i++) {
            StorePath p;
            std::string hash;
            for (int c = 0; c < 32; c++)
                hash += "0123456789abcdfghijklmnpqrsvwxyz"[rng() % 32];
            p.hash = hash;
            p.name = "cand" + std::to_string(i);
            p.rendered = "/fpm/store/" + hash + "-" + p.name;
            candidates.push_back(p);
        }

        // plant k of them across random files / symlink targets / dir names
        std::set<size_t> planted;
        size_t k = rng() % (n + 1);
        fs::create_directories(out.path() / "deep");
        int fileNo = 0;
        while (planted.size() < k) {
            size_t pick = rng() % n;
            if (!planted.insert(pick).second)
                continue;
            switch (rng() % 3) {
            case 0:
                util::writeFile(out.path() / ("f" + std::to_string(fileNo++)),
                    "prefix " + candidates[pick].rendered + " suffix");
                break;
            case 1:
                fs::create_symlink(
                    candidates[pick].rendered, out.path() / ("l" + std::to_string(fileNo++)));
                break;
            case 2:
                fs::create_directories(out.path() / "deep" / candidates[pick].hash);
                break;
            }
        }

        auto found = scanReferences(out.path(), candidates);
        std::set<std::string> foundSet;
        for (auto & p : found)
            foundSet.insert(p.rendered);
        std::set<std::string> expect;
        for (size_t i : planted)
            expect.insert(candidates[i].rendered);
        CHECK(foundSet == expect);
    }
}

TEST_CASE("check_closure accepts self references and flags strangers")
{
    TempDir out("closure");
    std::string self = "/fpm/store/" + std::string(32, '1') + "-self";
    std::string declared = "/fpm/store/" + std::string(32, '2') + "-dep";
    std::string stranger = "/fpm/store/" + std::string(32, '3') + "-stranger";

    StorePath selfP{std::string(32, '1'), "self", self};
    StorePath declaredP{std::string(32, '2'), "dep", declared};
    StorePath strangerP{std::string(32, '3'), "stranger", stranger};

    CHECK_NOTHROW(checkClosure(self, {selfP, declaredP}, {declared}));
    try {
        checkClosure(self, {strangerP}, {declared});
        FAIL("expected ImpurityDetected");
    } catch (const Error & e) {
        CHECK(e.kind() == "ImpurityDetected");
        CHECK(std::string(e.what()).find(stranger) != std::string::npos);
    }
}

TEST_CASE("undeclared reference in the output is an impurity")
{
    Fixture f;
    auto bash = f.store.addToStore("static-bash", fs::canonical("/bin/sh"), false);
    // an interned path the derivation never declares
    auto secret = f.store.addTextToStore("secret-dep", "shhh");

    // declaring the path keeps the same build pure
    auto [pureDrv, pureD] = derivation(f.store, "impure-1.0", "x86_64-linux", bash.rendered,
        {"-c", "echo $SMUGGLE > $out"}, {{"SMUGGLE", secret.rendered}}, {},
        {bash.rendered, secret.rendered});
    auto pure = f.engine.buildDerivations({pureDrv});
    CHECK(pure[0].status == BuildStatus::Built);
    CHECK(std::find(pure[0].scannedReferences.begin(), pure[0].scannedReferences.end(),
              secret.rendered)
        != pure[0].scannedReferences.end());

    // the impure variant discovers the path at build time (a glob over the
    // store, via $out's dirname) so instantiation cannot see it in args
    auto [impureDrv, impureD] = derivation(f.store, "impure-2.0", "x86_64-linux",
        bash.rendered,
        {"-c", "for f in $(dirname $out)/*-secret-dep; do echo $f; done > $out"}, {},
        {}, {bash.rendered});
    auto impure = f.engine.buildDerivations({impureDrv});
    CHECK(impure[0].status == BuildStatus::Failed);
    CHECK(impure[0].error.find("ImpurityDetected") != std::string::npos);
    CHECK(!f.store.isValidPath(f.store.parseStorePath(impureD.outputPath)));
}

TEST_CASE("builder writing a stray store entry is caught")
{
    Fixture f;
    auto bash = f.store.addToStore("static-bash", fs::canonical("/bin/sh"), false);
    // the stray path is composed at build time from $out's dirname so the
    // derivation itself stays self-describing
    auto [drv, d] = derivation(f.store, "vandal", "x86_64-linux", bash.rendered,
        {"-c", "echo x > $(dirname $out)/" + std::string(32, 'k') + "-stray && echo ok > $out"},
        {}, {}, {bash.rendered});
    auto results = f.engine.buildDerivations({drv});
    CHECK(results[0].status == BuildStatus::Failed);
    CHECK(results[0].error.find("ImpurityDetected") != std::string::npos);
}

TEST_CASE("determinism: two fresh stores produce identical bytes")
{
    auto build = [](const fs::path & root) {
        Store store(root / "store");
        Engine engine(store, testEngineOptions(root / "state"));
        auto [drv, d] = derivation(store, "det", "x86_64-linux", builtinWriteText, {},
            {{"text", "deterministic"}}, {}, {});
        engine.buildDerivations({drv});
        return util::readFile(d.outputPath);
    };
    TempDir a("det-a"), b("det-b");
    CHECK(build(a) == build(b));
}
