#include "fpm/gc.hpp"

#include "fpm/error.hpp"
#include "fpm/profile.hpp"
#include "fpm/util.hpp"

#include <algorithm>
#include <deque>
#include <iostream>

namespace fs = std::filesystem;

namespace fpm {

namespace {

/* Map an absolute path (possibly inside a store object) back to the
   containing store path. */
std::optional<StorePath> containingStorePath(const Store & store, const fs::path & target)
{
    std::string t = target.lexically_normal().string();
    const std::string & root = store.rootDir();
    if (t.rfind(root + "/", 0) != 0)
        return std::nullopt;
    std::string rest = t.substr(root.size() + 1);
    std::string first = rest.substr(0, rest.find('/'));
    try {
        return store.parseStorePath(root + "/" + first);
    } catch (const Error &) {
        return std::nullopt;
    }
}

void addRoot(const Store & store, const fs::path & target, std::vector<StorePath> & roots)
{
    if (auto sp = containingStorePath(store, target))
        roots.push_back(*sp);
}

void rootsUnderTree(const Store & store, const fs::path & dir, std::vector<StorePath> & roots)
{
    for (auto & e : fs::recursive_directory_iterator(dir)) {
        if (!fs::is_symlink(e.path()))
            continue;
        addRoot(store, fs::read_symlink(e.path()), roots);
    }
}

}

std::vector<StorePath> collectRoots(const Store & store, const std::filesystem::path & stateDir)
{
    std::vector<StorePath> roots;

    fs::path profiles = stateDir / "profiles";
    if (fs::is_directory(profiles)) {
        for (auto & user : fs::directory_iterator(profiles)) {
            if (!fs::is_directory(user.path()))
                continue;
            for (auto & gen : fs::directory_iterator(user.path())) {
                std::string base = gen.path().filename().string();
                if (base.rfind("generation-", 0) != 0 || !fs::is_directory(gen.path()))
                    continue;
                rootsUnderTree(store, gen.path(), roots);
                fs::path manifestFile = gen.path() / "manifest";
                if (fs::exists(manifestFile)) {
                    auto m = Manifest::parse(util::readFile(manifestFile));
                    for (auto & e : m.entries) {
                        addRoot(store, e.outputPath, roots);
                        for (auto & p : e.propagated)
                            addRoot(store, p, roots);
                    }
                }
            }
        }
    }

    fs::path gcroots = stateDir / "gcroots";
    if (fs::is_directory(gcroots)) {
        for (auto & e : fs::directory_iterator(gcroots)) {
            if (!fs::is_symlink(e.path()))
                continue;
            fs::path target = fs::read_symlink(e.path());
            if (!fs::exists(fs::symlink_status(target))) {
                std::cerr << "warning: dangling gc root " << e.path().string() << " -> "
                          << target.string() << ", skipping\n";
                continue;
            }
            addRoot(store, target, roots);
        }
    }

    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
    return roots;
}

std::set<StorePath> liveSet(const Store & store, const std::vector<StorePath> & roots)
{
    std::set<StorePath> live;
    std::deque<StorePath> queue(roots.begin(), roots.end());
    while (!queue.empty()) {
        StorePath p = queue.front();
        queue.pop_front();
        if (!live.insert(p).second)
            continue;
        if (!store.isValidPath(p))
            continue;
        for (auto & ref : store.references(p))
            if (!live.count(ref))
                queue.push_back(ref);
    }
    return live;
}

GcReport runGc(Store & store, const std::filesystem::path & stateDir, bool dryRun)
{
    GcReport report;
    store.withLock([&] {
        auto roots = collectRoots(store, stateDir);
        auto live = liveSet(store, roots);
        for (auto & p : store.allValidPaths()) {
            if (live.count(p)) {
                report.keptCount++;
                continue;
            }
            uint64_t size = 0;
            if (fs::exists(fs::symlink_status(p.rendered)))
                size = util::treeSize(p.rendered);
            if (dryRun) {
                report.deleted.push_back(p);
                report.freedBytes += size;
                continue;
            }
            try {
                store.unregisterAndDelete(p);
                report.deleted.push_back(p);
                report.freedBytes += size;
            } catch (const std::exception & e) {
                std::cerr << "warning: could not delete " << p.rendered << ": " << e.what()
                          << "\n";
                report.keptCount++;
            }
        }
    });
    std::sort(report.deleted.begin(), report.deleted.end());
    return report;
}

std::string formatGcReport(const GcReport & report)
{
    return "deleted " + std::to_string(report.deleted.size()) + " paths, freed "
        + std::to_string(report.freedBytes);
}

}
