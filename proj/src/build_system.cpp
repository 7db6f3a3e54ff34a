#include "fpm/build_system.hpp"
#include "fpm/error.hpp"

#include <algorithm>

namespace fpm {

const std::vector<std::string> & standardPhaseNames()
{
    static const std::vector<std::string> names{"unpack", "patch-source-shebangs", "configure",
        "build", "check", "install", "patch-shebangs"};
    return names;
}

BuildSystem variantBuildSystem(const BuildSystem & base, std::string name,
    std::string extraModule,
    const std::vector<std::pair<std::string, std::string>> & phaseOverrides)
{
    auto & known = standardPhaseNames();
    BuildSystem bs = base;
    bs.name = std::move(name);
    if (!extraModule.empty()) bs.modules.push_back(std::move(extraModule));
    for (auto & [phase, proc] : phaseOverrides) {
        if (std::find(known.begin(), known.end(), phase) == known.end())
            fail("KeyNotFound", "unknown phase '" + phase + "' in build system overrides");
        bs.phaseOverrides.emplace_back(phase, proc);
    }
    return bs;
}

BuildSystems::BuildSystems()
{
    BuildSystem generic{"generic-build-system", {"generic-build-system"}, {}};
    add(generic);
    add(variantBuildSystem(generic, "script-build-system", "script-build-system",
        {{"configure", "script-configure"}, {"check", "script-check"}}));
}

BuildSystems & BuildSystems::instance()
{
    static BuildSystems instance;
    return instance;
}

void BuildSystems::add(BuildSystem bs)
{
    auto name = bs.name;
    systems_[name] = std::move(bs);
}

const BuildSystem & BuildSystems::get(const std::string & name) const
{
    auto it = systems_.find(name);
    if (it == systems_.end()) fail("UnknownBuildSystem", "unknown build system '" + name + "'");
    return it->second;
}

std::vector<std::string> BuildSystems::names() const
{
    std::vector<std::string> out;
    for (auto & [name, bs] : systems_) out.push_back(name);
    return out;
}

std::pair<StorePath, Derivation> buildSystemBuild(Store & store, const BuildSystem & bs,
    const std::string & name, const std::string & system, const std::string & sourceDrvPath,
    const std::vector<std::pair<std::string, std::string>> & inputDrvPairs,
    const SExpr & arguments, const std::vector<std::filesystem::path> & moduleSearchPath)
{
    if (arguments.kind != SExpr::Kind::List)
        fail("ArgumentError", "build system arguments must be a keyword/value list");
    if (arguments.items.size() % 2 != 0)
        fail("ArgumentError", "odd-length keyword/value list in build system arguments");

    SExpr configureFlags = SExpr::list({SExpr::symbol("quote"), SExpr::list()});
    SExpr makeFlags = configureFlags;
    SExpr tests = SExpr::boolean(true);
    SExpr phases = SExpr::symbol("%standard-phases");
    bool phasesOverridden = false;

    for (size_t i = 0; i < arguments.items.size(); i += 2) {
        const SExpr & key = arguments.items[i];
        if (key.kind != SExpr::Kind::Symbol || key.atom.substr(0, 2) != "#:")
            fail("ArgumentError", "expected a #:keyword in build system arguments");
        const SExpr & value = arguments.items[i + 1];
        if (key.atom == "#:configure-flags") configureFlags = value;
        else if (key.atom == "#:make-flags") makeFlags = value;
        else if (key.atom == "#:tests?") tests = value;
        else if (key.atom == "#:phases") {
            phases = value;
            phasesOverridden = true;
        }
        /* Unrecognized keywords are ignored, by the phase contract. */
    }

    /* A variant system's phase swaps apply to the default phase list, not
       to a user-provided #:phases expression. */
    if (!phasesOverridden)
        for (auto & [phase, proc] : bs.phaseOverrides)
            phases = SExpr::list({SExpr::symbol("alist-replace"),
                SExpr::list({SExpr::symbol("quote"), SExpr::symbol(phase)}),
                SExpr::symbol(proc), phases});

    auto entry = [](const char * key, SExpr value) {
        return SExpr::list({SExpr::symbol("list"),
            SExpr::list({SExpr::symbol("quote"), SExpr::symbol(key)}), std::move(value)});
    };

    SExpr argsAlist = SExpr::list({SExpr::symbol("list"),
        entry("system", SExpr::string(system)),
        entry("source", parseSExpr("(assoc-ref %build-inputs \"source\")")),
        entry("inputs", SExpr::symbol("%build-inputs")),
        entry("configure-flags", configureFlags),
        entry("make-flags", makeFlags),
        entry("tests?", tests)});

    SExpr expr = SExpr::list({SExpr::symbol("run-phases"), phases, std::move(argsAlist)});

    std::vector<std::pair<std::string, std::string>> inputs{{"source", sourceDrvPath}};
    for (auto & p : inputDrvPairs) inputs.push_back(p);

    return buildExpressionToDerivation(store, name, system, expr, inputs, bs.modules,
        moduleSearchPath);
}

}
