#pragma once

#include <string>

#include "aan/json_io.hpp"

namespace aan {

inline constexpr int kScenarioSchemaVersion = 1;

struct Scenario {
    std::string name;
    SessionConfig cfg;
    Task task;
    PatientSpec patient;
    ScriptedTherapist therapist;
    VicParams vic;
    SkillLayout skill_layout = SkillLayout::Offset;

    void validate() const;
};

/// Schema v1. Task shapes "triangle" and "rectangle" are presets; "polygon"
/// takes explicit vertices. Patient fields override the stage preset.
Scenario parse_scenario(const Json& j);
Scenario load_scenario(const std::string& path);

/// Fully explicit form; parse_scenario(scenario_to_json(s)) reproduces s.
Json scenario_to_json(const Scenario& s);

/// Same scenario with a different seed; the task does not depend on it.
Scenario with_seed(Scenario s, std::uint64_t seed);

}  // namespace aan
