#include "fpm/config.hpp"

#include "fpm/error.hpp"
#include "fpm/util.hpp"

#include <cstdlib>

#ifndef FPM_DEFAULT_MODULE_DIR
#define FPM_DEFAULT_MODULE_DIR ""
#endif

namespace fpm {

namespace {

std::string pick(const std::string & flag, const char * envVar, const std::string & fallback)
{
    if (!flag.empty())
        return flag;
    if (const char * env = std::getenv(envVar); env && *env)
        return env;
    return fallback;
}

}

CliConfig resolveConfig(const CliFlags & flags)
{
    CliConfig c;

    std::string home = std::getenv("HOME") ? std::getenv("HOME") : "/tmp";
    c.stateDir = pick(flags.stateDir, "FPM_STATE", home + "/.fpm");
    c.storeRoot = pick(flags.storeRoot, "FPM_STORE", (c.stateDir / "store").string());
    c.system = pick(flags.system, "FPM_SYSTEM", "x86_64-linux");

    std::string jobs = pick(flags.maxJobs, "FPM_MAX_JOBS", "1");
    try {
        c.maxJobs = std::max<size_t>(1, std::stoul(jobs));
    } catch (const std::exception &) {
        fail("ArgumentError", "bad max-jobs value: " + jobs);
    }

    c.pkgPath = pick(flags.pkgPath, "FPM_PKG_PATH", "");

    std::string modules = pick(flags.modulePath, "FPM_MODULE_PATH", FPM_DEFAULT_MODULE_DIR);
    for (auto & part : util::split(modules, ':'))
        if (!part.empty())
            c.modulePath.emplace_back(part);

    std::string fallbackUser = std::getenv("USER") ? std::getenv("USER") : "default";
    c.user = pick(flags.user, "FPM_USER", fallbackUser);

    return c;
}

std::string CliConfig::display() const
{
    std::string modules;
    for (size_t i = 0; i < modulePath.size(); i++) {
        if (i)
            modules += ":";
        modules += modulePath[i].string();
    }
    return "store " + storeRoot.string() + "\n"    //
        + "state " + stateDir.string() + "\n"      //
        + "system " + system + "\n"                //
        + "max-jobs " + std::to_string(maxJobs) + "\n" //
        + "pkg-path " + pkgPath.string() + "\n"    //
        + "module-path " + modules + "\n"          //
        + "user " + user + "\n";
}

}
