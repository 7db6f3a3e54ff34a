#pragma once

#include "fpm/derivation.hpp"
#include "fpm/store.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fpm {

enum class BuildStatus { Built, Cached, Failed, NotAttempted };

struct BuildResult
{
    std::string drvPath;
    std::string outputPath;
    BuildStatus status = BuildStatus::NotAttempted;
    std::string log;
    std::vector<std::string> scannedReferences;
    std::string error; // error kind + message when status == Failed
};

struct BuildEvent
{
    std::string drvPath;
    bool start = false; // start or finish of a builder execution
};

struct EngineOptions
{
    std::string system = "x86_64-linux";
    size_t maxJobs = 1;
    std::filesystem::path stateDir; // logs/ and tmp/ live here
};

/* Conservative reference scan: every candidate whose 32-character hash
   occurs anywhere in any regular file (or symlink target) under
   `outputPath`.  Superset of the true references, deterministic order. */
std::vector<StorePath> scanReferences(const std::filesystem::path & outputPath,
    const std::vector<StorePath> & candidates);

/* scanned must be a subset of declared plus the output itself. */
void checkClosure(const std::string & outputPath, const std::vector<StorePath> & scanned,
    const std::vector<std::string> & declared);

class Engine
{
public:
    Engine(Store & store, EngineOptions options);

    /* Build the targets and their whole input closure.  Inputs are built
       before dependents; already-valid outputs are skipped as cached; on
       failure, dependents are not attempted but independent siblings
       finish.  Results cover the full closure in dependency order. */
    std::vector<BuildResult> buildDerivations(const std::vector<StorePath> & targets);

    size_t buildersExecuted() const { return buildersExecuted_; }
    const std::vector<BuildEvent> & events() const { return events_; }
    Store & store() { return store_; }
    const EngineOptions & options() const { return options_; }

private:
    BuildResult buildOne(const StorePath & drvPath, const Derivation & d);
    void runBuilder(const Derivation & d, const std::filesystem::path & buildDir,
        std::string & log);

    Store & store_;
    EngineOptions options_;
    size_t buildersExecuted_ = 0;
    std::vector<BuildEvent> events_;
};

}
