#include "aan/scenario.hpp"

namespace aan {

void Scenario::validate() const {
    cfg.validate();
    task.validate(cfg);
    patient.validate(cfg.dims);
    therapist.validate(cfg.force_threshold);
    vic.validate();
}

namespace {

PatientSpec stage_preset(const std::string& stage) {
    if (stage == "stage1") return stage1_patient();
    if (stage == "stage2") return stage2_patient();
    fail(ErrorKind::Config, "unknown patient stage '" + stage + "' (expected stage1 or stage2)");
}

Task task_from_json(const Json& j, const SessionConfig& cfg) {
    require(j.is_object(), ErrorKind::Config, "task must be an object");
    check_keys(j, {"name", "shape", "vertices", "keypoint_times"}, "task");
    require(j.contains("shape") && j.at("shape").is_string(), ErrorKind::Config, "task.shape must be a string");
    const std::string shape = j.at("shape").get<std::string>();
    std::vector<Vec> vertices;
    if (shape == "triangle") {
        vertices = triangle_task(cfg).vertices;
    } else if (shape == "rectangle") {
        vertices = rectangle_task(cfg).vertices;
    } else if (shape != "polygon") {
        fail(ErrorKind::Config, "unknown task shape '" + shape + "'");
    }
    if (auto it = j.find("vertices"); it != j.end()) {
        require(shape == "polygon", ErrorKind::Config, "task.vertices is only allowed with shape 'polygon'");
        require(it->is_array(), ErrorKind::Config, "task.vertices must be an array");
        for (const auto& v : *it) {
            vertices.push_back(vec_from_json(v, cfg.dims));
        }
    }
    require(vertices.size() >= 2, ErrorKind::Config, "task needs at least two vertices");
    std::vector<double> keypoints;
    if (auto it = j.find("keypoint_times"); it != j.end()) {
        const Vec k = vec_from_json(*it);
        keypoints.assign(k.data(), k.data() + k.size());
        require(!keypoints.empty(), ErrorKind::Config, "task.keypoint_times must not be empty");
    }
    std::string name = shape;
    if (auto it = j.find("name"); it != j.end()) {
        require(it->is_string(), ErrorKind::Config, "task.name must be a string");
        name = it->get<std::string>();
    }
    return polygon_task(std::move(name), std::move(vertices), cfg, std::move(keypoints));
}

}  // namespace

Scenario parse_scenario(const Json& j) {
    try {
        require(j.is_object(), ErrorKind::Config, "scenario must be a JSON object");
        check_keys(j, {"schema_version", "name", "config", "task", "patient", "therapist", "vic", "skill"},
                   "scenario");
        require(j.contains("schema_version"), ErrorKind::Config, "scenario lacks schema_version");
        require(j.at("schema_version").is_number_integer() && j.at("schema_version").get<int>() == kScenarioSchemaVersion,
                ErrorKind::Config, "unsupported schema_version (expected 1)");
        require(j.contains("task"), ErrorKind::Config, "scenario lacks a task");
        Scenario s;
        s.name = j.value("name", std::string("scenario"));
        s.cfg = config_from_json(j.value("config", Json::object()));
        s.task = task_from_json(j.at("task"), s.cfg);
        const Json patient = j.value("patient", Json::object());
        require(patient.is_object(), ErrorKind::Config, "patient must be an object");
        const std::string stage = patient.value("stage", std::string("stage1"));
        s.patient = patient_from_json(patient, stage_preset(stage));
        s.therapist = therapist_from_json(j.value("therapist", Json::object()));
        s.vic = vic_from_json(j.value("vic", Json::object()));
        if (auto it = j.find("skill"); it != j.end()) {
            require(it->is_object(), ErrorKind::Config, "skill must be an object");
            check_keys(*it, {"layout"}, "skill");
            if (auto l = it->find("layout"); l != it->end()) {
                require(l->is_string(), ErrorKind::Config, "skill.layout must be a string");
                s.skill_layout = parse_skill_layout(l->get<std::string>());
            }
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("malformed scenario: ") + e.what());
    } catch (const Error& e) {
        // Every invalid value is a scenario problem from the caller's side.
        if (e.kind() == ErrorKind::Config) throw;
        fail(ErrorKind::Config, e.what());
    }
}

Scenario load_scenario(const std::string& path) {
    const Json j = read_json_file(path);
    try {
        return parse_scenario(j);
    } catch (const Error& e) {
        fail(e.kind(), path + ": " + e.what());
    }
}

Json scenario_to_json(const Scenario& s) {
    Json vertices = Json::array();
    for (const auto& v : s.task.vertices) {
        vertices.push_back(to_json(v));
    }
    return Json{{"schema_version", kScenarioSchemaVersion},
                {"name", s.name},
                {"config", to_json(s.cfg)},
                {"task",
                 {{"name", s.task.name},
                  {"shape", "polygon"},
                  {"vertices", std::move(vertices)},
                  {"keypoint_times", s.task.keypoint_times}}},
                {"patient", to_json(s.patient)},
                {"therapist", to_json(s.therapist)},
                {"vic", to_json(s.vic)},
                {"skill", {{"layout", to_string(s.skill_layout)}}}};
}

Scenario with_seed(Scenario s, std::uint64_t seed) {
    s.cfg.seed = seed;
    return s;
}

}  // namespace aan
