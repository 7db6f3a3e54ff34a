#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fpm/error.hpp"
#include "fpm/gc.hpp"
#include "fpm/store.hpp"
#include "fpm/util.hpp"
#include "helpers.hpp"

#include <map>
#include <random>
#include <set>

using namespace fpm;
using namespace fpm::test;
namespace fs = std::filesystem;

namespace {

struct Fixture
{
    TempDir dir{"gc"};
    Store store{dir / "store"};
    fs::path state = dir / "state";
    size_t counter = 0;

    StorePath add(const std::string & name, const std::vector<StorePath> & refs = {})
    {
        return store.addTextToStore(name,
            "contents of " + name + " #" + std::to_string(counter++), "source", refs);
    }

    void gcRoot(const std::string & linkName, const fs::path & target)
    {
        fs::create_directories(state / "gcroots");
        fs::create_symlink(target, state / "gcroots" / linkName);
    }

    /* A minimal generation: a manifest naming `outputs` plus symlinks into
       the store, the two shapes collectRoots walks. */
    void generation(const std::string & user, int n, const std::vector<StorePath> & outputs)
    {
        fs::path g = state / "profiles" / user / ("generation-" + std::to_string(n));
        fs::create_directories(g);
        std::string manifest;
        for (auto & o : outputs)
            manifest += o.name + "\t1.0\t" + o.rendered + "\t\n";
        util::writeFile(g / "manifest", manifest);
        int i = 0;
        for (auto & o : outputs)
            fs::create_symlink(o.rendered, g / ("link-" + std::to_string(i++)));
    }
};

}

TEST_CASE("an empty state yields no roots and a full sweep")
{
    Fixture f;
    auto a = f.add("orphan-a");
    auto b = f.add("orphan-b", {a});

    CHECK(collectRoots(f.store, f.state).empty());
    CHECK(liveSet(f.store, {}).empty());

    uint64_t expect = util::treeSize(a.rendered) + util::treeSize(b.rendered);
    auto report = runGc(f.store, f.state, false);
    CHECK(report.deleted.size() == 2);
    CHECK(report.freedBytes == expect);
    CHECK(report.keptCount == 0);
    CHECK(f.store.allValidPaths().empty());
    CHECK(!fs::exists(a.rendered));
}

TEST_CASE("roots come from generations, manifests, and gcroots")
{
    Fixture f;
    auto a = f.add("pkg-a");
    auto b = f.add("pkg-b");
    auto c = f.add("pkg-c");
    auto d = f.add("pkg-d");

    f.generation("alice", 1, {a});
    f.generation("alice", 2, {b});
    f.gcRoot("pin-c", c.rendered);
    // a root may point inside a store object; it pins the whole object
    f.gcRoot("pin-d-inner", d.rendered);

    auto roots = collectRoots(f.store, f.state);
    REQUIRE(roots.size() == 4); // duplicate-free despite manifest + link listing each
    CHECK(std::is_sorted(roots.begin(), roots.end()));
    CHECK(std::set<StorePath>(roots.begin(), roots.end())
        == std::set<StorePath>{a, b, c, d});
}

TEST_CASE("dangling gc roots warn and are skipped")
{
    Fixture f;
    auto a = f.add("kept");
    f.gcRoot("good", a.rendered);
    f.gcRoot("stale", (f.dir / "no-longer-there").string());

    auto roots = collectRoots(f.store, f.state);
    REQUIRE(roots.size() == 1);
    CHECK(roots[0] == a);

    // links to existing files outside the store contribute nothing
    util::writeFile(f.dir / "elsewhere", "x");
    f.gcRoot("outside", (f.dir / "elsewhere").string());
    CHECK(collectRoots(f.store, f.state).size() == 1);
}

TEST_CASE("the live set is the reference closure of the roots")
{
    Fixture f;
    auto a = f.add("chain-a");
    auto b = f.add("chain-b", {a});
    auto c = f.add("chain-c", {b});
    auto stray = f.add("stray");

    auto live = liveSet(f.store, {c});
    CHECK(live == std::set<StorePath>{a, b, c});
    CHECK(!live.count(stray));

    // a rooted path that was never registered stays in the set, unexpanded
    StorePath ghost = f.store.parseStorePath(
        f.store.rootDir() + "/" + std::string(32, 'g') + "-ghost");
    auto live2 = liveSet(f.store, {ghost});
    CHECK(live2 == std::set<StorePath>{ghost});
}

TEST_CASE("rooting the tip keeps the chain; unrooting frees it")
{
    Fixture f;
    auto a = f.add("lib");
    auto b = f.add("app", {a});
    f.gcRoot("app", b.rendered);
    uint64_t bytes = util::treeSize(a.rendered) + util::treeSize(b.rendered);

    auto r1 = runGc(f.store, f.state, false);
    CHECK(r1.deleted.empty());
    CHECK(r1.keptCount == 2);
    CHECK(formatGcReport(r1) == "deleted 0 paths, freed 0");

    fs::remove(f.state / "gcroots" / "app");
    auto r2 = runGc(f.store, f.state, false);
    CHECK(r2.deleted.size() == 2);
    CHECK(r2.freedBytes == bytes);
    CHECK(formatGcReport(r2) == "deleted 2 paths, freed " + std::to_string(bytes));
    CHECK(f.store.allValidPaths().empty());
}

TEST_CASE("dry runs report without touching the store")
{
    Fixture f;
    auto a = f.add("kept");
    auto b = f.add("doomed");
    f.gcRoot("pin", a.rendered);

    auto before = f.store.allValidPaths();
    auto report = runGc(f.store, f.state, true);
    REQUIRE(report.deleted.size() == 1);
    CHECK(report.deleted[0] == b);
    CHECK(report.freedBytes == util::treeSize(b.rendered));

    CHECK(f.store.allValidPaths() == before);
    CHECK(fs::exists(b.rendered));
    CHECK(util::readFile(b.rendered).find("doomed") != std::string::npos);
}

TEST_CASE("random reference graphs match brute-force reachability")
{
    std::mt19937 rng(20260826);

    for (int trial = 0; trial < 12; ++trial) {
        Fixture f;
        size_t n = trial == 0 ? 200 : 10 + rng() % 50;

        /* Edges only point to earlier nodes, matching how a store grows. */
        std::vector<StorePath> nodes;
        std::map<size_t, std::set<size_t>> edges;
        for (size_t i = 0; i < n; ++i) {
            std::vector<StorePath> refs;
            if (i > 0) {
                size_t k = rng() % std::min<size_t>(i, 4);
                std::set<size_t> picks;
                while (picks.size() < k) picks.insert(rng() % i);
                for (size_t p : picks) refs.push_back(nodes[p]);
                edges[i] = picks;
            }
            nodes.push_back(f.add("node-" + std::to_string(i), refs));
        }

        std::set<size_t> rootIdx;
        size_t nRoots = rng() % (n / 3 + 1);
        while (rootIdx.size() < nRoots) rootIdx.insert(rng() % n);
        for (size_t r : rootIdx)
            f.gcRoot("root-" + std::to_string(r), nodes[r].rendered);

        // independent oracle: plain BFS over the edge map we built
        std::set<size_t> reachable;
        std::vector<size_t> queue(rootIdx.begin(), rootIdx.end());
        while (!queue.empty()) {
            size_t i = queue.back();
            queue.pop_back();
            if (!reachable.insert(i).second) continue;
            for (size_t j : edges[i]) queue.push_back(j);
        }

        std::set<StorePath> expected;
        for (size_t i : reachable) expected.insert(nodes[i]);
        CHECK(liveSet(f.store, collectRoots(f.store, f.state)) == expected);

        uint64_t expectBytes = 0;
        for (size_t i = 0; i < n; ++i)
            if (!reachable.count(i)) expectBytes += util::treeSize(nodes[i].rendered);

        auto report = runGc(f.store, f.state, false);
        CHECK(report.deleted.size() == n - reachable.size());
        CHECK(report.freedBytes == expectBytes);
        CHECK(report.keptCount == reachable.size());

        // safety: every live path survived; completeness: nothing else did
        auto remaining = f.store.allValidPaths();
        CHECK(std::set<StorePath>(remaining.begin(), remaining.end()) == expected);
        for (size_t i : reachable) CHECK(fs::exists(nodes[i].rendered));

        // idempotence
        auto again = runGc(f.store, f.state, false);
        CHECK(again.deleted.empty());
        CHECK(again.freedBytes == 0);
    }
}
