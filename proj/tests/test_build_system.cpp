#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fpm/build_system.hpp"
#include "fpm/derivation.hpp"
#include "fpm/engine.hpp"
#include "fpm/error.hpp"
#include "fpm/store.hpp"
#include "fpm/util.hpp"
#include "helpers.hpp"

#include <functional>
#include <random>

using namespace fpm;
using namespace fpm::test;
namespace fs = std::filesystem;

namespace {

struct Fixture
{
    TempDir dir{"buildsys"};
    Store store{dir / "store"};
    Engine engine{store, testEngineOptions(dir / "state")};
    size_t counter = 0;

    /* Intern a source tree and wrap it in an unpack derivation, the same
       shape an origin produces. */
    std::string sourceDrv(const std::function<void(const fs::path &)> & populate)
    {
        fs::path tree = dir / ("src-tree-" + std::to_string(counter++));
        fs::create_directories(tree);
        populate(tree);
        auto seed = store.addToStore("source-tree", tree, true);
        auto [drv, d] = derivation(store, "source", "x86_64-linux",
            builtinUnpackSeed, {}, {}, {}, {seed.rendered});
        return drv.rendered;
    }

    std::pair<StorePath, Derivation> build(const std::string & bsName,
        const std::string & name, const std::string & src, const std::string & args,
        const std::vector<std::pair<std::string, std::string>> & inputs = {})
    {
        return buildSystemBuild(store, BuildSystems::instance().get(bsName), name,
            "x86_64-linux", src, inputs, parseSExpr(args), moduleSearchPath());
    }

    const BuildResult & resultFor(
        const std::vector<BuildResult> & results, const StorePath & drv)
    {
        for (auto & r : results)
            if (r.drvPath == drv.rendered) return r;
        REQUIRE(false);
        throw std::logic_error("unreachable");
    }
};

/* Positions of the given needles inside haystack, requiring each to be
   present and in order. */
void expectInOrder(const std::string & haystack, const std::vector<std::string> & needles)
{
    size_t pos = 0;
    for (auto & n : needles) {
        size_t found = haystack.find(n, pos);
        INFO("looking for '" << n << "'");
        REQUIRE(found != std::string::npos);
        pos = found + n.size();
    }
}

}

TEST_CASE("standard phase list and registered systems")
{
    CHECK(standardPhaseNames()
        == std::vector<std::string>{"unpack", "patch-source-shebangs", "configure",
            "build", "check", "install", "patch-shebangs"});

    auto names = BuildSystems::instance().names();
    CHECK(std::find(names.begin(), names.end(), "generic-build-system") != names.end());
    CHECK(std::find(names.begin(), names.end(), "script-build-system") != names.end());
    CHECK_THROWS_WITH_AS(BuildSystems::instance().get("cmake-build-system"),
        doctest::Contains("UnknownBuildSystem"), Error);
}

TEST_CASE("variant construction rejects unknown phases")
{
    auto & generic = BuildSystems::instance().get("generic-build-system");
    CHECK_THROWS_WITH_AS(
        variantBuildSystem(generic, "bad", "", {{"deploy", "my-deploy"}}),
        doctest::Contains("KeyNotFound"), Error);
}

TEST_CASE("malformed argument lists are rejected")
{
    Fixture f;
    auto src = f.sourceDrv([](const fs::path & t) {
        util::writeFile(t / "hello.txt", "hi\n");
    });
    CHECK_THROWS_WITH_AS(
        f.build("generic-build-system", "x", src, "(#:tests?)"),
        doctest::Contains("ArgumentError"), Error);
    CHECK_THROWS_WITH_AS(
        f.build("generic-build-system", "x", src, "(tests? #f)"),
        doctest::Contains("ArgumentError"), Error);
}

TEST_CASE("generic build runs every phase in order and installs artifacts")
{
    Fixture f;
    auto src = f.sourceDrv([](const fs::path & t) {
        fs::create_directories(t / "src");
        util::writeFile(t / "src" / "hello.txt", "Hello, world!\n");
    });
    auto [drv, d] = f.build("generic-build-system", "hello-2.10", src,
        "(#:configure-flags '(\"--disable-color\" \"--with-x\"))");

    auto results = f.engine.buildDerivations({drv});
    auto & r = f.resultFor(results, drv);
    REQUIRE(r.status == BuildStatus::Built);

    expectInOrder(r.log,
        {"starting phase `unpack'", "phase `unpack' done",
         "starting phase `patch-source-shebangs'", "starting phase `configure'",
         "starting phase `build'", "starting phase `check'",
         "starting phase `install'", "phase `install' done",
         "starting phase `patch-shebangs'", "phase `patch-shebangs' done"});

    CHECK(util::readFile(fs::path(d.outputPath) / "hello.txt") == "Hello, world!\n");
    // configure flags land verbatim, in order, one per line
    CHECK(util::readFile(fs::path(d.outputPath) / "config.params")
        == "--disable-color\n--with-x\n");
}

TEST_CASE("#:tests? #f skips the check phase")
{
    Fixture f;
    auto src = f.sourceDrv([](const fs::path & t) {
        util::writeFile(t / "check.bl", "#f\n"); // would fail if evaluated
    });
    auto [drv, d] = f.build("generic-build-system", "untested", src, "(#:tests? #f)");
    auto results = f.engine.buildDerivations({drv});
    auto & r = f.resultFor(results, drv);
    REQUIRE(r.status == BuildStatus::Built);
    CHECK(r.log.find("check: skipped") != std::string::npos);
}

TEST_CASE("a failing check phase fails the build")
{
    Fixture f;
    auto src = f.sourceDrv([](const fs::path & t) {
        util::writeFile(t / "check.bl", "(begin (log \"tests ran\") #f)\n");
    });
    auto [drv, d] = f.build("generic-build-system", "flaky", src, "()");
    auto results = f.engine.buildDerivations({drv});
    auto & r = f.resultFor(results, drv);
    CHECK(r.status == BuildStatus::Failed);
    expectInOrder(r.log, {"tests ran", "phase `check' failed"});
    CHECK(r.log.find("starting phase `install'") == std::string::npos);
}

TEST_CASE("a custom phase inserted after configure rewrites the source")
{
    Fixture f;
    auto src = f.sourceDrv([](const fs::path & t) {
        fs::create_directories(t / "src");
        util::writeFile(t / "src" / "hello.txt", "Hello, world!\n");
    });
    auto [drv, d] = f.build("generic-build-system", "hello-2.10", src,
        "(#:phases (alist-cons-after 'configure 'change-hello"
        "  (lambda (args)"
        "    (begin"
        "      (substitute \"src/hello.txt\""
        "        (list (list \"Hello, world!\""
        "                    (string-append \"Howdy! Running on \""
        "                                   (assoc-ref args 'system) \".\"))))"
        "      #t))"
        "  %standard-phases))");

    auto results = f.engine.buildDerivations({drv});
    auto & r = f.resultFor(results, drv);
    REQUIRE(r.status == BuildStatus::Built);
    // the new phase runs between configure and build, others keep their order
    expectInOrder(r.log,
        {"phase `configure' done", "starting phase `change-hello'",
         "phase `change-hello' done", "starting phase `build'"});
    CHECK(util::readFile(fs::path(d.outputPath) / "hello.txt")
        == "Howdy! Running on x86_64-linux.\n");
}

TEST_CASE("script build system swaps the configure and check phases")
{
    Fixture f;
    auto populate = [](const fs::path & t) {
        fs::create_directories(t / "src");
        util::writeFile(t / "src" / "tool.txt", "contents\n");
        util::writeFile(t / "test.bl", "(begin (log \"script tests ran\") #t)\n");
    };

    auto [gDrv, gD] = f.build("generic-build-system", "pkg", f.sourceDrv(populate),
        "(#:configure-flags '(\"--fast\"))");
    auto [sDrv, sD] = f.build("script-build-system", "pkg", f.sourceDrv(populate),
        "(#:configure-flags '(\"--fast\"))");
    REQUIRE(gDrv.rendered != sDrv.rendered);

    auto gr = f.engine.buildDerivations({gDrv});
    auto sr = f.engine.buildDerivations({sDrv});
    REQUIRE(f.resultFor(gr, gDrv).status == BuildStatus::Built);
    REQUIRE(f.resultFor(sr, sDrv).status == BuildStatus::Built);

    // outputs differ only in the configure artifact's name
    CHECK(util::readFile(fs::path(gD.outputPath) / "config.params") == "--fast\n");
    CHECK(!fs::exists(fs::path(gD.outputPath) / "Makefile.PL.out"));
    CHECK(util::readFile(fs::path(sD.outputPath) / "Makefile.PL.out") == "--fast\n");
    CHECK(!fs::exists(fs::path(sD.outputPath) / "config.params"));
    CHECK(util::readFile(fs::path(gD.outputPath) / "tool.txt")
        == util::readFile(fs::path(sD.outputPath) / "tool.txt"));

    // test.bl (not check.bl) drives the script system's check phase
    CHECK(f.resultFor(sr, sDrv).log.find("script tests ran") != std::string::npos);
    CHECK(f.resultFor(gr, gDrv).log.find("script tests ran") == std::string::npos);
}

TEST_CASE("installed shebangs point into declared inputs")
{
    Fixture f;
    // an input that provides bin/sh
    auto shTree = f.sourceDrv([](const fs::path & t) {
        fs::create_directories(t / "src" / "bin");
        util::writeFile(t / "src" / "bin" / "sh", "fake shell\n");
        fs::permissions(t / "src" / "bin" / "sh", fs::perms::owner_all);
    });
    auto [shellDrv, shellD] = f.build("generic-build-system", "mini-shell", shTree, "()");

    auto src = f.sourceDrv([](const fs::path & t) {
        fs::create_directories(t / "src");
        util::writeFile(t / "src" / "run", "#!/bin/sh\necho hi\n");
        fs::permissions(t / "src" / "run", fs::perms::owner_all);
    });
    auto [drv, d] = f.build("generic-build-system", "scripted", src, "()",
        {{"mini-shell", shellDrv.rendered}});

    auto results = f.engine.buildDerivations({drv});
    REQUIRE(f.resultFor(results, drv).status == BuildStatus::Built);
    auto installed = util::readFile(fs::path(d.outputPath) / "run");
    CHECK(installed.substr(0, 2) == "#!");
    CHECK(installed.find(shellD.outputPath + "/bin/sh") != std::string::npos);
    CHECK(util::isExecutable(fs::path(d.outputPath) / "run"));
}

TEST_CASE("run-phases is the conjunction of its phases")
{
    Fixture f;
    std::mt19937 rng(7);
    auto src = f.sourceDrv([](const fs::path & t) {
        util::writeFile(t / "marker", "m\n");
    });

    for (int trial = 0; trial < 8; ++trial) {
        size_t n = 1 + rng() % 4;
        size_t firstFalse = rng() % (n + 1); // n means "all true"
        std::string phases = "(list";
        for (size_t i = 0; i < n; ++i) {
            bool ok = i < firstFalse || firstFalse == n;
            phases += " (list 'p" + std::to_string(i) + " (lambda (args) "
                + (ok ? "#t" : "#f") + "))";
        }
        // a final phase creates the output so successful runs are complete
        phases += " (list 'finish (lambda (args) (begin (mkdir-p %output) #t))))";

        auto [drv, d] = f.build("generic-build-system",
            "stub-" + std::to_string(trial), src, "(#:phases " + phases + ")");
        auto results = f.engine.buildDerivations({drv});
        auto & r = f.resultFor(results, drv);
        if (firstFalse == n) {
            CHECK(r.status == BuildStatus::Built);
        } else {
            CHECK(r.status == BuildStatus::Failed);
            CHECK(r.log.find("phase `p" + std::to_string(firstFalse) + "' failed")
                != std::string::npos);
            // no phase after the failing one was attempted
            CHECK(r.log.find("starting phase `p" + std::to_string(firstFalse + 1) + "'")
                == std::string::npos);
        }
    }
}
