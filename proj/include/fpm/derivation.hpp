#pragma once

#include "fpm/sexpr.hpp"
#include "fpm/store.hpp"

#include <string>
#include <utility>
#include <vector>

namespace fpm {

/* Builders that run inside the engine instead of as a child process. */
inline constexpr const char * builtinWriteText = "builtin:write-text";
inline constexpr const char * builtinUnpackSeed = "builtin:unpack-seed";

bool isBuiltinTag(std::string_view builder);

struct DerivationInput
{
    std::string drvPath; // rendered store path ending in .drv
    std::string label;   // which declared input it satisfies

    bool operator==(const DerivationInput & other) const = default;
};

struct Derivation
{
    std::string name;
    std::string system;
    std::string builder; // rendered store path, or a builtin: tag
    std::vector<std::string> args;
    std::vector<std::pair<std::string, std::string>> env; // includes "out"
    std::vector<DerivationInput> inputs;
    std::vector<std::string> sources; // rendered store paths
    std::string outputPath;           // rendered, computed

    bool isBuiltin() const { return isBuiltinTag(builder); }
    std::string envValue(const std::string & key) const;

    bool operator==(const Derivation & other) const = default;
};

/* Canonical on-disk form: a single-line s-expression with fields in fixed
   order; byte-stable across platforms. */
std::string writeDrv(const Derivation & d);

/* Accepts permuted field order; re-serializing restores the canonical
   order.  Unknown fields are rejected. */
Derivation parseDrv(std::string_view bytes);

/* Pure construction: computes the output path (serialization with an
   all-zero placeholder output, hashed, then substituted) and appends the
   reserved "out" env binding.  `env` must not contain "out". */
Derivation makeDerivation(const std::string & rootDir, std::string name, std::string system,
    std::string builder, std::vector<std::string> args,
    std::vector<std::pair<std::string, std::string>> env, std::vector<DerivationInput> inputs,
    std::vector<std::string> sources);

/* Instantiate: construct, check input validity and self-description, and
   write the .drv into the store.  Memoized per process: repeated identical
   calls issue no second store write. */
std::pair<StorePath, Derivation> derivation(Store & store, std::string name, std::string system,
    std::string builder, std::vector<std::string> args,
    std::vector<std::pair<std::string, std::string>> env, std::vector<DerivationInput> inputs,
    std::vector<std::string> sources);

/* Topologically ordered transitive input closure: every derivation before
   its dependents, ties broken by drv path. */
std::vector<std::pair<StorePath, Derivation>> inputClosure(const Store & store,
    const std::vector<StorePath> & drvPaths);

/* All store paths mentioned in args/env must be accounted for by inputs,
   sources, input outputs, or the output itself. */
void checkSelfDescribing(const std::string & rootDir, const Derivation & d,
    const std::vector<std::string> & inputOutputs);

}
