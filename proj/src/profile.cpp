#include "fpm/profile.hpp"

#include "fpm/error.hpp"
#include "fpm/util.hpp"

#include <algorithm>
#include <chrono>
#include <fcntl.h>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <sys/file.h>
#include <thread>
#include <unistd.h>

namespace fs = std::filesystem;

namespace fpm {

std::function<void(int)> Profile::faultHook;

namespace {

/* Per-profile advisory lock; times out like the store lock does. */
class ScopedFlock
{
public:
    explicit ScopedFlock(const fs::path & file)
    {
        fd_ = ::open(file.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0)
            fail("IoError", "cannot open lock file " + file.string());
        auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
        while (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            if (std::chrono::steady_clock::now() >= deadline) {
                ::close(fd_);
                fail("StoreBusy", "profile locked: " + file.string());
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    }

    ~ScopedFlock()
    {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }

private:
    int fd_;
};

std::regex makeRegex(const std::string & pattern)
{
    try {
        return std::regex(pattern, std::regex::extended);
    } catch (const std::regex_error & e) {
        fail("RegexError", "bad pattern `" + pattern + "': " + e.what());
    }
}

void warnCollision(const fs::path & p)
{
    std::cerr << "warning: collision at " << p.string() << ", keeping the later entry\n";
}

/* Union-merge srcDir into the symlink tree under dstDir.  Directories
   start out as whole-tree symlinks and are expanded in place only when a
   later entry needs to merge into them. */
void mergeInto(const fs::path & dstDir, const fs::path & srcDir)
{
    std::vector<fs::path> children;
    for (auto & e : fs::directory_iterator(srcDir))
        children.push_back(e.path());
    std::sort(children.begin(), children.end());

    for (auto & src : children) {
        fs::path dst = dstDir / src.filename();
        bool srcIsDir = fs::is_directory(src) && !fs::is_symlink(src);
        auto dstStatus = fs::symlink_status(dst);

        if (srcIsDir) {
            if (fs::is_directory(dstStatus)) {
                mergeInto(dst, src);
            } else if (fs::exists(dstStatus)) {
                if (fs::is_symlink(dstStatus) && fs::is_directory(dst)) {
                    fs::path previous = fs::read_symlink(dst);
                    fs::remove(dst);
                    fs::create_directory(dst);
                    mergeInto(dst, previous);
                    mergeInto(dst, src);
                } else {
                    warnCollision(dst);
                    util::deleteRecursive(dst);
                    fs::create_symlink(src, dst);
                }
            } else {
                fs::create_symlink(src, dst);
            }
        } else {
            if (fs::exists(dstStatus)) {
                warnCollision(dst);
                util::deleteRecursive(dst);
            }
            fs::create_symlink(src, dst);
        }
    }
}

/* Transitive propagated-input closure, the package itself excluded. */
void collectPropagated(const PackagePtr & p, std::vector<PackagePtr> & out,
    std::set<const Package *> & seen)
{
    for (auto & [label, dep] : p->propagatedInputs) {
        if (!seen.insert(dep.get()).second)
            continue;
        out.push_back(dep);
        collectPropagated(dep, out, seen);
    }
}

}

std::string Manifest::serialize() const
{
    std::string out;
    for (auto & e : entries) {
        out += e.name + "\t" + e.version + "\t" + e.outputPath + "\t";
        for (size_t i = 0; i < e.propagated.size(); i++) {
            if (i)
                out += ",";
            out += e.propagated[i];
        }
        out += "\n";
    }
    return out;
}

Manifest Manifest::parse(std::string_view text)
{
    Manifest m;
    for (auto & line : util::split(text, '\n')) {
        if (line.empty())
            continue;
        auto cols = util::split(line, '\t');
        if (cols.size() != 4)
            fail("ParseError", "malformed manifest line: " + line);
        ManifestEntry e{cols[0], cols[1], cols[2], {}};
        if (!cols[3].empty())
            e.propagated = util::split(cols[3], ',');
        m.entries.push_back(std::move(e));
    }
    return m;
}

const ManifestEntry * Manifest::find(const std::string & name) const
{
    for (auto & e : entries)
        if (e.name == name)
            return &e;
    return nullptr;
}

Profile::Profile(Store & store, std::filesystem::path stateDir, std::string user)
    : store_(store)
    , stateDir_(std::move(stateDir))
    , dir_(stateDir_ / "profiles" / user)
    , user_(std::move(user))
{
    fs::create_directories(dir_);
}

std::vector<int> Profile::generationNumbers() const
{
    std::vector<int> nums;
    for (auto & e : fs::directory_iterator(dir_)) {
        std::string base = e.path().filename().string();
        if (base.rfind("generation-", 0) == 0 && fs::is_directory(e.path())) {
            std::string tail = base.substr(11);
            if (!tail.empty() && tail.find_first_not_of("0123456789") == std::string::npos)
                nums.push_back(std::stoi(tail));
        }
    }
    std::sort(nums.begin(), nums.end());
    return nums;
}

std::optional<Generation> Profile::current() const
{
    std::error_code ec;
    fs::path target = fs::read_symlink(link(), ec);
    if (ec)
        return std::nullopt;
    fs::path dir = dir_ / target;
    std::string base = target.filename().string();
    if (base.rfind("generation-", 0) != 0 || !fs::exists(dir / "manifest"))
        return std::nullopt;
    Generation g;
    g.number = std::stoi(base.substr(11));
    g.dir = dir;
    g.manifest = Manifest::parse(util::readFile(dir / "manifest"));
    return g;
}

std::optional<Generation> Profile::transact(const std::vector<Action> & actions,
    const Registry & registry, const EngineOptions & engineOptions,
    const std::vector<std::filesystem::path> & moduleSearchPath)
{
    if (actions.empty())
        fail("EmptyTransaction", "no actions given");

    ScopedFlock lock(dir_ / ".lock");

    Manifest cur;
    if (auto g = current())
        cur = g->manifest;

    /* The plan maps names to either a kept entry or a package to build. */
    struct Planned
    {
        std::optional<ManifestEntry> keep;
        PackagePtr build;
    };
    std::map<std::string, Planned> plan;
    for (auto & e : cur.entries)
        plan[e.name] = Planned{e, nullptr};

    bool changed = false;
    for (auto & a : actions) {
        switch (a.kind) {
        case Action::Kind::Install:
            plan[a.package->name] = Planned{std::nullopt, a.package};
            changed = true;
            break;
        case Action::Kind::Remove:
            if (!plan.count(a.name))
                fail("NotInstalled", a.name + " is not installed");
            plan.erase(a.name);
            changed = true;
            break;
        case Action::Kind::Upgrade: {
            std::regex re = makeRegex(a.pattern.empty() ? ".*" : a.pattern);
            for (auto & [name, planned] : plan) {
                if (!planned.keep || !std::regex_search(name, re))
                    continue;
                PackagePtr fresh;
                try {
                    fresh = registry.find(name);
                } catch (const Error & e) {
                    if (e.kind() == "PackageNotFound") {
                        std::cerr << "warning: " << name << " no longer in the registry\n";
                        continue;
                    }
                    throw;
                }
                if (fresh->version != planned.keep->version) {
                    planned = Planned{std::nullopt, fresh};
                    changed = true;
                }
            }
            break;
        }
        }
    }

    if (!changed)
        return std::nullopt;

    /* Build everything first; the profile is untouched on failure. */
    std::vector<StorePath> targets;
    std::map<std::string, std::pair<std::string, std::vector<std::string>>> built;
    for (auto & [name, planned] : plan) {
        if (!planned.build)
            continue;
        auto [drvPath, drv] =
            packageDerivation(store_, planned.build, engineOptions.system, moduleSearchPath);
        targets.push_back(drvPath);

        std::vector<PackagePtr> propagated;
        std::set<const Package *> seen{planned.build.get()};
        collectPropagated(planned.build, propagated, seen);
        std::vector<std::string> propagatedOutputs;
        for (auto & p : propagated)
            propagatedOutputs.push_back(
                packageDerivation(store_, p, engineOptions.system, moduleSearchPath)
                    .second.outputPath);
        std::sort(propagatedOutputs.begin(), propagatedOutputs.end());
        built[name] = {drv.outputPath, std::move(propagatedOutputs)};
    }

    if (!targets.empty()) {
        Engine engine(store_, engineOptions);
        for (auto & r : engine.buildDerivations(targets))
            if (r.status == BuildStatus::Failed)
                fail("BuildFailed", "transaction aborted: " + r.error);
    }

    Manifest next;
    for (auto & [name, planned] : plan) {
        if (planned.keep) {
            next.entries.push_back(*planned.keep);
        } else {
            auto & [output, propagated] = built.at(name);
            next.entries.push_back(
                ManifestEntry{name, planned.build->version, output, propagated});
        }
    }

    auto nums = generationNumbers();
    int number = nums.empty() ? 1 : nums.back() + 1;
    return materialize(number, next);
}

Generation Profile::materialize(int number, const Manifest & manifest)
{
    int step = 0;
    auto fault = [&step] {
        step++;
        if (faultHook)
            faultHook(step);
    };

    fs::path tmp = dir_ / ("generation-" + std::to_string(number) + ".tmp");
    fs::path final_ = dir_ / ("generation-" + std::to_string(number));
    fs::path linkTmp = dir_ / "profile.tmp";

    try {
        fault();
        if (fs::exists(fs::symlink_status(tmp)))
            util::deleteRecursive(tmp);
        fs::create_directories(tmp);
        fault();
        util::atomicWriteFile(tmp / "manifest", manifest.serialize());
        fault();

        auto linkOutput = [&](const std::string & rendered) {
            fault();
            fs::path out = rendered;
            if (fs::is_directory(out) && !fs::is_symlink(out))
                mergeInto(tmp, out);
            else {
                fs::path dst = tmp / store_.parseStorePath(rendered).name;
                if (fs::exists(fs::symlink_status(dst))) {
                    warnCollision(dst);
                    util::deleteRecursive(dst);
                }
                fs::create_symlink(out, dst);
            }
        };
        for (auto & e : manifest.entries) {
            linkOutput(e.outputPath);
            for (auto & p : e.propagated)
                linkOutput(p);
        }
        fault();

        fs::rename(tmp, final_);
        fault();
        fs::remove(linkTmp);
        fault();
        fs::create_symlink(final_.filename(), linkTmp);
        fault();
        fs::rename(linkTmp, link());
        fault();
    } catch (...) {
        std::error_code ec;
        if (fs::exists(fs::symlink_status(tmp)))
            util::deleteRecursive(tmp);
        fs::remove(linkTmp, ec);
        /* A fully renamed generation the link never reached is rolled
           back too: a failed transaction changes nothing observable. */
        fs::path target = fs::read_symlink(link(), ec);
        if (fs::exists(fs::symlink_status(final_)) && (ec || target != final_.filename()))
            util::deleteRecursive(final_);
        throw;
    }

    return Generation{number, final_, manifest};
}

Generation Profile::rollBack()
{
    ScopedFlock lock(dir_ / ".lock");
    auto cur = current();
    if (!cur)
        fail("NothingToRollBack", "profile has no generations");
    int previous = 0;
    for (int n : generationNumbers())
        if (n < cur->number)
            previous = n;
    if (previous == 0)
        fail("NothingToRollBack", "no generation before " + std::to_string(cur->number));

    fs::path target = "generation-" + std::to_string(previous);
    fs::path linkTmp = dir_ / "profile.tmp";
    fs::remove(linkTmp);
    fs::create_symlink(target, linkTmp);
    fs::rename(linkTmp, link());

    Generation g;
    g.number = previous;
    g.dir = dir_ / target;
    g.manifest = Manifest::parse(util::readFile(g.dir / "manifest"));
    return g;
}

void Profile::deleteGeneration(int number)
{
    ScopedFlock lock(dir_ / ".lock");
    if (auto cur = current(); cur && cur->number == number)
        fail("ArgumentError", "cannot delete the active generation");
    fs::path dir = dir_ / ("generation-" + std::to_string(number));
    if (!fs::is_directory(dir))
        fail("ArgumentError", "no generation " + std::to_string(number));
    util::deleteRecursive(dir);
}

std::vector<std::array<std::string, 3>> Profile::listInstalled(const std::string & pattern) const
{
    std::vector<std::array<std::string, 3>> rows;
    auto g = current();
    if (!g)
        return rows;
    std::optional<std::regex> re;
    if (!pattern.empty())
        re = makeRegex(pattern);
    for (auto & e : g->manifest.entries)
        if (!re || std::regex_search(e.name, *re))
            rows.push_back({e.name, e.version, e.outputPath});
    std::sort(rows.begin(), rows.end());
    return rows;
}

std::vector<std::array<std::string, 3>> listAvailable(const Registry & registry,
    const std::string & pattern)
{
    std::optional<std::regex> re;
    if (!pattern.empty())
        re = makeRegex(pattern);
    std::vector<std::array<std::string, 3>> rows;
    for (auto & p : registry.all())
        if (!re || std::regex_search(p->name, *re))
            rows.push_back({p->name, p->version, p->location.display()});
    return rows;
}

}
