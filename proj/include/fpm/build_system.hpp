#pragma once

#include "fpm/build_expr.hpp"
#include "fpm/sexpr.hpp"
#include "fpm/store.hpp"

#include <map>
#include <string>
#include <vector>

namespace fpm {

/* A build system is a descriptor: which modules to import and which
   standard phases to swap out.  The build procedure always routes through
   buildExpressionToDerivation. */
struct BuildSystem
{
    std::string name;
    std::vector<std::string> modules; // always importable; generic module first
    /* phase name -> module-level procedure symbol replacing it */
    std::vector<std::pair<std::string, std::string>> phaseOverrides;
};

const std::vector<std::string> & standardPhaseNames();

/* Derive a variant system from a base, swapping named phases for
   procedures defined in `extraModule`.  Unknown phase names are rejected
   at construction. */
BuildSystem variantBuildSystem(const BuildSystem & base, std::string name,
    std::string extraModule,
    const std::vector<std::pair<std::string, std::string>> & phaseOverrides);

class BuildSystems
{
public:
    static BuildSystems & instance();

    void add(BuildSystem bs);
    const BuildSystem & get(const std::string & name) const; // UnknownBuildSystem
    std::vector<std::string> names() const;

private:
    BuildSystems();
    std::map<std::string, BuildSystem> systems_;
};

/* Compile (name, source, inputs, arguments) into a derivation whose build
   expression runs the system's phases.  Recognized argument keywords:
   #:configure-flags, #:make-flags, #:tests?, #:phases. */
std::pair<StorePath, Derivation> buildSystemBuild(Store & store, const BuildSystem & bs,
    const std::string & name, const std::string & system, const std::string & sourceDrvPath,
    const std::vector<std::pair<std::string, std::string>> & inputDrvPairs,
    const SExpr & arguments, const std::vector<std::filesystem::path> & moduleSearchPath);

}
