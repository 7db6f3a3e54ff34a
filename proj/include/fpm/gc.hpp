#pragma once

#include "fpm/store.hpp"

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace fpm {

struct GcReport
{
    std::vector<StorePath> deleted;
    uint64_t freedBytes = 0;
    size_t keptCount = 0;
};

/* Store paths reachable from any profile generation (manifest entries and
   every symlink under the generation tree) or from a `gcroots/` link.
   Dangling links warn and are skipped.  Sorted, duplicate-free. */
std::vector<StorePath> collectRoots(const Store & store,
    const std::filesystem::path & stateDir);

/* Transitive closure of the roots under the registry's recorded
   references. */
std::set<StorePath> liveSet(const Store & store, const std::vector<StorePath> & roots);

/* Delete (or, with dryRun, merely report) every valid path outside the
   live set.  Holds the store lock for the whole collection. */
GcReport runGc(Store & store, const std::filesystem::path & stateDir, bool dryRun);

std::string formatGcReport(const GcReport & report);

}
