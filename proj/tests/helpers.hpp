#pragma once

#include "fpm/engine.hpp"
#include "fpm/store.hpp"
#include "fpm/util.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace fpm::test {

/* Fresh scratch directory, removed on scope exit. */
class TempDir
{
public:
    explicit TempDir(const std::string & hint = "fpm-test")
    {
        auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        for (int attempt = 0;; attempt++) {
            path_ = base / (hint + "-" + std::to_string(rd() % 1000000000));
            if (std::filesystem::create_directories(path_))
                break;
            if (attempt > 100)
                throw std::runtime_error("cannot create temp dir");
        }
    }

    ~TempDir()
    {
        std::error_code ec;
        if (!path_.empty() && std::filesystem::exists(path_))
            util::deleteRecursive(path_);
    }

    TempDir(const TempDir &) = delete;
    TempDir & operator=(const TempDir &) = delete;

    const std::filesystem::path & path() const { return path_; }
    operator const std::filesystem::path &() const { return path_; }
    std::filesystem::path operator/(const std::string & rest) const { return path_ / rest; }

private:
    std::filesystem::path path_;
};

inline EngineOptions testEngineOptions(const std::filesystem::path & stateDir,
    const std::string & system = "x86_64-linux", size_t maxJobs = 1)
{
    EngineOptions o;
    o.system = system;
    o.maxJobs = maxJobs;
    o.stateDir = stateDir;
    return o;
}

inline std::vector<std::filesystem::path> moduleSearchPath()
{
    return {std::filesystem::path(FPM_DEFAULT_MODULE_DIR)};
}

}
