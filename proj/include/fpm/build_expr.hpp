#pragma once

#include "fpm/derivation.hpp"
#include "fpm/sexpr.hpp"
#include "fpm/store.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace fpm {

/* Intern the interpreter seed: a marker the engine recognizes as "run the
   embedded build-language evaluator".  It exists so expression-built
   derivations have the same input-graph shape as ones with a real
   stand-alone interpreter. */
StorePath internInterpreterSeed(Store & store);

/* Locate `<name>.bl` in the module search path. */
std::filesystem::path findModuleFile(const std::string & name,
    const std::vector<std::filesystem::path> & searchPath);

/* Turn a build expression into a derivation.  The expression is carried in
   the derivation env under "expr"; at build time %output and %build-inputs
   are injected into the evaluator's global frame.  A non-empty `modules`
   list creates auxiliary module-import / module-import-compiled derivations
   and adds them as inputs. */
std::pair<StorePath, Derivation> buildExpressionToDerivation(Store & store,
    const std::string & name, const std::string & system, const SExpr & builderExpr,
    const std::vector<std::pair<std::string, std::string>> & inputPairs, // label -> drv path
    const std::vector<std::string> & modules,
    const std::vector<std::filesystem::path> & moduleSearchPath);

}
