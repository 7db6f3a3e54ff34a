#include "fpm/store.hpp"
#include "fpm/error.hpp"
#include "fpm/util.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace fpm {

bool isValidStoreName(std::string_view name)
{
    if (name.empty()) return false;
    for (char c : name) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')
            || (c >= '0' && c <= '9') || c == '.' || c == '+' || c == '-' || c == '_';
        if (!ok) return false;
    }
    return true;
}

static bool isBase32Hash(std::string_view s)
{
    static const char * alphabet = "0123456789abcdfghijklmnpqrsvwxyz";
    if (s.size() != 32) return false;
    for (char c : s)
        if (!std::strchr(alphabet, c) || !c) return false;
    return true;
}

std::string makeStorePathRendered(const std::string & rootDir, std::string_view typeTag,
    const Sha256 & contentDigest, std::string_view name)
{
    if (!isValidStoreName(name))
        fail("InvalidName", "invalid store path name '" + std::string(name) + "'");
    std::string fingerprint = std::string(typeTag) + ":" + hex(contentDigest) + ":"
        + rootDir + ":" + std::string(name);
    auto digest = truncateDigest(sha256(fingerprint));
    return rootDir + "/" + hashToBase32(digest) + "-" + std::string(name);
}

Store::Store(fs::path root)
{
    fs::create_directories(root);
    rootDir_ = fs::weakly_canonical(fs::absolute(root)).string();
    registryFile_ = fs::path(rootDir_) / ".registry";
}

StorePath Store::makeStorePath(std::string_view typeTag, const Sha256 & contentDigest,
    std::string_view name) const
{
    return parseStorePath(makeStorePathRendered(rootDir_, typeTag, contentDigest, name));
}

StorePath Store::parseStorePath(std::string_view rendered) const
{
    std::string prefix = rootDir_ + "/";
    if (rendered.substr(0, prefix.size()) != prefix)
        fail("InvalidName", "path '" + std::string(rendered) + "' is not in the store");
    auto base = rendered.substr(prefix.size());
    auto dash = base.find('-');
    if (dash == std::string_view::npos || base.find('/') != std::string_view::npos)
        fail("InvalidName", "malformed store path '" + std::string(rendered) + "'");
    StorePath p;
    p.hash = std::string(base.substr(0, dash));
    p.name = std::string(base.substr(dash + 1));
    p.rendered = std::string(rendered);
    if (!isBase32Hash(p.hash) || !isValidStoreName(p.name))
        fail("InvalidName", "malformed store path '" + std::string(rendered) + "'");
    return p;
}

/* ---- locking ------------------------------------------------------- */

namespace {

struct LockState
{
    std::recursive_timed_mutex mutex;
    int depth = 0;
    int fd = -1;
};

LockState & lockStateFor(const std::string & root)
{
    static std::mutex tableMutex;
    static std::map<std::string, std::unique_ptr<LockState>> table;
    std::lock_guard<std::mutex> guard(tableMutex);
    auto & slot = table[root];
    if (!slot) slot = std::make_unique<LockState>();
    return *slot;
}

}

void Store::withLock(const std::function<void()> & action) const
{
    using namespace std::chrono;
    const auto timeout = seconds(60);

    auto & state = lockStateFor(rootDir_);
    if (!state.mutex.try_lock_for(timeout))
        fail("StoreBusy", "timed out waiting for store lock on " + rootDir_);
    std::lock_guard<std::recursive_timed_mutex> guard(state.mutex, std::adopt_lock);

    bool acquiredFile = false;
    if (state.depth == 0) {
        std::string lockFile = rootDir_ + "/.lock";
        int fd = open(lockFile.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0666);
        if (fd < 0) fail("IoError", "cannot open lock file " + lockFile);
        auto deadline = steady_clock::now() + timeout;
        while (flock(fd, LOCK_EX | LOCK_NB) != 0) {
            if (steady_clock::now() >= deadline) {
                close(fd);
                fail("StoreBusy", "timed out waiting for store lock on " + rootDir_);
            }
            std::this_thread::sleep_for(milliseconds(20));
        }
        state.fd = fd;
        acquiredFile = true;
    }
    state.depth++;

    try {
        action();
    } catch (...) {
        state.depth--;
        if (acquiredFile) {
            flock(state.fd, LOCK_UN);
            close(state.fd);
            state.fd = -1;
        }
        throw;
    }
    state.depth--;
    if (acquiredFile) {
        flock(state.fd, LOCK_UN);
        close(state.fd);
        state.fd = -1;
    }
}

/* ---- registry ------------------------------------------------------ */

Store::Registry Store::loadRegistry() const
{
    Registry reg;
    if (!fs::exists(registryFile_)) return reg;
    std::istringstream in(util::readFile(registryFile_));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        std::string path = line.substr(0, tab);
        std::vector<std::string> refs;
        if (tab != std::string::npos && tab + 1 < line.size())
            for (auto & r : util::split(line.substr(tab + 1), ','))
                if (!r.empty()) refs.push_back(r);
        reg[path] = refs;
    }
    return reg;
}

void Store::saveRegistry(const Registry & reg) const
{
    std::string out;
    for (auto & [path, refs] : reg) {
        out += path;
        out += '\t';
        for (size_t i = 0; i < refs.size(); ++i) {
            if (i) out += ',';
            out += refs[i];
        }
        out += '\n';
    }
    util::atomicWriteFile(registryFile_, out);
}

bool Store::isValidPath(const StorePath & path) const
{
    auto reg = loadRegistry();
    return reg.count(path.rendered) > 0;
}

std::vector<StorePath> Store::references(const StorePath & path) const
{
    auto reg = loadRegistry();
    auto it = reg.find(path.rendered);
    if (it == reg.end())
        fail("InvalidName", "path '" + path.rendered + "' is not valid");
    std::vector<StorePath> out;
    for (auto & r : it->second) out.push_back(parseStorePath(r));
    return out;
}

std::vector<StorePath> Store::allValidPaths() const
{
    auto reg = loadRegistry();
    std::vector<StorePath> out;
    for (auto & [path, refs] : reg) out.push_back(parseStorePath(path));
    return out;
}

void Store::registerValid(const StorePath & path, const std::vector<StorePath> & references)
{
    withLock([&] {
        auto reg = loadRegistry();
        for (auto & r : references)
            if (!reg.count(r.rendered))
                fail("ClosureViolation",
                    "reference '" + r.rendered + "' of '" + path.rendered + "' is not valid");
        if (!fs::exists(fs::symlink_status(path.rendered)))
            fail("IoError", "cannot register missing path '" + path.rendered + "'");
        std::vector<std::string> refs;
        for (auto & r : references) refs.push_back(r.rendered);
        std::sort(refs.begin(), refs.end());
        refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
        reg[path.rendered] = refs;
        util::makeReadOnlyRecursive(path.rendered);
        saveRegistry(reg);
    });
}

void Store::unregisterAndDelete(const StorePath & path)
{
    withLock([&] {
        auto reg = loadRegistry();
        reg.erase(path.rendered);
        saveRegistry(reg);
        util::deleteRecursive(path.rendered);
    });
}

StorePath Store::addToStore(std::string_view name, const fs::path & source, bool recursive)
{
    if (!isValidStoreName(name))
        fail("InvalidName", "invalid store path name '" + std::string(name) + "'");
    if (!fs::exists(fs::symlink_status(source)))
        fail("IoError", "source '" + source.string() + "' does not exist");

    Sha256 digest = recursive ? sha256(serializeTree(source)) : sha256File(source);
    StorePath path = makeStorePath("source", digest, name);

    withLock([&] {
        if (isValidPath(path)) return;
        if (fs::exists(fs::symlink_status(path.rendered)))
            util::deleteRecursive(path.rendered);
        util::copyRecursive(source, path.rendered);
        writeCount_++;
        registerValid(path, {});
    });
    return path;
}

StorePath Store::addTextToStore(std::string_view name, std::string_view contents,
    std::string_view typeTag, const std::vector<StorePath> & references)
{
    if (!isValidStoreName(name))
        fail("InvalidName", "invalid store path name '" + std::string(name) + "'");
    StorePath path = makeStorePath(typeTag, sha256(contents), name);
    withLock([&] {
        if (isValidPath(path)) return;
        util::writeFile(path.rendered, contents);
        writeCount_++;
        registerValid(path, references);
    });
    return path;
}

}
