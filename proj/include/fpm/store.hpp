#pragma once

#include "fpm/hash.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fpm {

struct StorePath
{
    std::string hash;     // 32 base32 characters
    std::string name;     // letters, digits, .+-_
    std::string rendered; // <root>/<hash>-<name>

    bool operator==(const StorePath & other) const { return rendered == other.rendered; }
    bool operator<(const StorePath & other) const { return rendered < other.rendered; }
};

bool isValidStoreName(std::string_view name);

/* Pure path computation: digest = first 20 bytes of
   sha256("<tag>:<hex content digest>:<root>:<name>").  Usable without a
   store on disk (golden tests, placeholder output paths). */
std::string makeStorePathRendered(const std::string & rootDir, std::string_view typeTag,
    const Sha256 & contentDigest, std::string_view name);

class Store
{
public:
    explicit Store(std::filesystem::path root);

    const std::string & rootDir() const { return rootDir_; }

    StorePath makeStorePath(std::string_view typeTag, const Sha256 & contentDigest,
        std::string_view name) const;

    /* Parse `<root>/<hash>-<name>`; throws InvalidName on anything else. */
    StorePath parseStorePath(std::string_view rendered) const;

    /* Intern a file or directory.  Idempotent: re-adding identical content
       returns the existing path without rewriting. */
    StorePath addToStore(std::string_view name, const std::filesystem::path & source,
        bool recursive);

    StorePath addTextToStore(std::string_view name, std::string_view contents,
        std::string_view typeTag = "source",
        const std::vector<StorePath> & references = {});

    void registerValid(const StorePath & path, const std::vector<StorePath> & references);

    bool isValidPath(const StorePath & path) const;
    std::vector<StorePath> references(const StorePath & path) const;
    std::vector<StorePath> allValidPaths() const;

    /* GC support: drop from the registry and delete from disk. */
    void unregisterAndDelete(const StorePath & path);

    /* Run `action` holding the exclusive store lock (reentrant within the
       process).  Times out with StoreBusy. */
    void withLock(const std::function<void()> & action) const;

    /* Number of actual path writes performed by this instance; memoization
       tests count these. */
    size_t writeCount() const { return writeCount_; }

private:
    using Registry = std::map<std::string, std::vector<std::string>>;
    Registry loadRegistry() const;
    void saveRegistry(const Registry & reg) const;

    std::string rootDir_;
    std::filesystem::path registryFile_;
    size_t writeCount_ = 0;
};

}
