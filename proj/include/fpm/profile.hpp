#pragma once

#include "fpm/engine.hpp"
#include "fpm/package.hpp"
#include "fpm/store.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fpm {

struct ManifestEntry
{
    std::string name;
    std::string version;
    std::string outputPath;
    std::vector<std::string> propagated;

    bool operator==(const ManifestEntry & other) const = default;
};

/* Kept sorted by entry name; names unique. */
struct Manifest
{
    std::vector<ManifestEntry> entries;

    std::string serialize() const;
    static Manifest parse(std::string_view text);
    const ManifestEntry * find(const std::string & name) const;

    bool operator==(const Manifest & other) const = default;
};

struct Generation
{
    int number = 0;
    std::filesystem::path dir;
    Manifest manifest;
};

struct Action
{
    enum class Kind { Install, Remove, Upgrade };

    Kind kind;
    PackagePtr package;    // Install
    std::string name;      // Remove
    std::string pattern;   // Upgrade (extended regex over names)

    static Action install(PackagePtr p) { return {Kind::Install, std::move(p), "", ""}; }
    static Action remove(std::string name) { return {Kind::Remove, nullptr, std::move(name), ""}; }
    static Action upgrade(std::string pattern)
    {
        return {Kind::Upgrade, nullptr, "", std::move(pattern)};
    }
};

class Profile
{
public:
    Profile(Store & store, std::filesystem::path stateDir, std::string user);

    const std::filesystem::path & dir() const { return dir_; }
    std::filesystem::path link() const { return dir_ / "profile"; }

    std::optional<Generation> current() const;
    std::vector<int> generationNumbers() const;

    /* Apply all actions as one transaction: build first, then materialize
       generation N+1 and atomically repoint the profile link.  Returns
       nothing when the actions amount to a no-op (upgrade matching nothing
       outdated). */
    std::optional<Generation> transact(const std::vector<Action> & actions,
        const Registry & registry, const EngineOptions & engineOptions,
        const std::vector<std::filesystem::path> & moduleSearchPath);

    Generation rollBack(); // NothingToRollBack

    void deleteGeneration(int number);

    /* (name, version, output path) rows, sorted. */
    std::vector<std::array<std::string, 3>> listInstalled(const std::string & pattern = "") const;

    /* Test hook: called with an increasing step number at every
       materialization step; throwing simulates a crash mid-transaction. */
    static std::function<void(int)> faultHook;

private:
    Generation materialize(int number, const Manifest & manifest);

    Store & store_;
    std::filesystem::path stateDir_;
    std::filesystem::path dir_;
    std::string user_;
};

/* (name, version, file:line) rows over the registry, sorted; optional
   extended-regex name filter. */
std::vector<std::array<std::string, 3>> listAvailable(const Registry & registry,
    const std::string & pattern = "");

}
