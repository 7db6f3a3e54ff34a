#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace fpm {

/* Startup configuration, resolved once: flag > environment variable >
   default. */
struct CliConfig
{
    std::filesystem::path stateDir;            // FPM_STATE
    std::filesystem::path storeRoot;           // FPM_STORE
    std::string system;                        // FPM_SYSTEM
    size_t maxJobs = 1;                        // FPM_MAX_JOBS
    std::filesystem::path pkgPath;             // FPM_PKG_PATH
    std::vector<std::filesystem::path> modulePath; // FPM_MODULE_PATH (colon-separated)
    std::string user;                          // FPM_USER

    std::string display() const;
};

struct CliFlags
{
    std::string stateDir, storeRoot, system, maxJobs, pkgPath, modulePath, user;
};

CliConfig resolveConfig(const CliFlags & flags);

}
