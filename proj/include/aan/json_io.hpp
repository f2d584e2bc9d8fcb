#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "aan/baselines.hpp"
#include "aan/core.hpp"
#include "aan/policy.hpp"
#include "aan/skill.hpp"

namespace aan {

// Insertion-ordered so serialized output is stable and readable.
using Json = nlohmann::ordered_json;

Json to_json(const Vec& v);
Json to_json(const Mat& m);  // array of rows
Json to_json(const TimedTrajectory& traj);
Json to_json(const ProbTrajectory& traj);  // covs row-major, flattened
Json to_json(const GmmModel& m);
Json to_json(const ViaPoint& v);
Json to_json(const ForceEvent& e);
Json to_json(const ForceSegment& s);
Json to_json(const IterationMetrics& m);
Json to_json(const GmmFitReport& r);
Json to_json(const PlsModel& m);
Json to_json(const SkillModel& m);
Json to_json(const SessionConfig& cfg);
Json to_json(const PatientSpec& p);
Json to_json(const ScriptedTherapist& t);
Json to_json(const VicParams& v);
Json to_json(const RobotImpedance& imp);

Vec vec_from_json(const Json& j, Eigen::Index expected = -1);
Mat mat_from_json(const Json& j);
TimedTrajectory trajectory_from_json(const Json& j);
ProbTrajectory prob_trajectory_from_json(const Json& j);
GmmModel gmm_from_json(const Json& j);
ViaPoint via_from_json(const Json& j);
ForceEvent event_from_json(const Json& j);
PlsModel pls_from_json(const Json& j);
SkillModel skill_model_from_json(const Json& j);

/// Fields present in `j` override `base`; unknown keys are a config error.
SessionConfig config_from_json(const Json& j, SessionConfig base = {});
PatientSpec patient_from_json(const Json& j, PatientSpec base);
ScriptedTherapist therapist_from_json(const Json& j, ScriptedTherapist base = {});
VicParams vic_from_json(const Json& j, VicParams base = {});

std::string_view to_string(ViaProduct p);
std::string_view to_string(VariancePrefactor p);
std::string_view to_string(ForceStatistic s);
std::string_view to_string(SkillLayout l);
ViaProduct parse_via_product(std::string_view s);
VariancePrefactor parse_variance_prefactor(std::string_view s);
ForceStatistic parse_force_statistic(std::string_view s);
SkillLayout parse_skill_layout(std::string_view s);

/// Config error naming the first key of `j` not in `allowed`.
void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace aan
