#include "aan/json_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace aan {

namespace {

template <typename T>
T get_number(const Json& j, std::string_view where) {
    require(j.is_number(), ErrorKind::Config, std::string(where) + " must be a number");
    return j.get<T>();
}

std::size_t get_count(const Json& j, std::string_view where) {
    require(j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0), ErrorKind::Config,
            std::string(where) + " must be a non-negative integer");
    return j.get<std::size_t>();
}

std::string get_string(const Json& j, std::string_view where) {
    require(j.is_string(), ErrorKind::Config, std::string(where) + " must be a string");
    return j.get<std::string>();
}

template <typename F>
void with(const Json& j, const char* key, F&& apply) {
    if (auto it = j.find(key); it != j.end()) {
        apply(*it);
    }
}

}  // namespace

Json to_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v[i]);
    }
    return a;
}

Json to_json(const Mat& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        a.push_back(std::move(row));
    }
    return a;
}

Json to_json(const TimedTrajectory& traj) {
    return Json{{"dt", traj.dt()}, {"points", to_json(traj.positions())}};
}

namespace {

Json flat(const Mat& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            a.push_back(m(r, c));
        }
    }
    return a;
}

Mat unflat(const Json& j, Eigen::Index d) {
    const Vec v = vec_from_json(j, d * d);
    Mat m(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) {
            m(r, c) = v[r * d + c];
        }
    }
    return m;
}

}  // namespace

Json to_json(const ProbTrajectory& traj) {
    Json covs = Json::array();
    for (const auto& c : traj.covariances()) {
        covs.push_back(flat(c));
    }
    return Json{{"times", traj.times()}, {"points", to_json(traj.means())}, {"covs", std::move(covs)}};
}

Json to_json(const GmmModel& m) {
    Json means = Json::array();
    Json covs = Json::array();
    for (std::size_t c = 0; c < m.components(); ++c) {
        means.push_back(to_json(m.means[c]));
        covs.push_back(to_json(m.covariances[c]));
    }
    return Json{{"weights", m.weights},
                {"means", std::move(means)},
                {"covs", std::move(covs)},
                {"input_min", m.input_min},
                {"input_max", m.input_max}};
}

ProbTrajectory prob_trajectory_from_json(const Json& j) {
    require(j.is_object(), ErrorKind::Config, "probabilistic trajectory must be an object");
    check_keys(j, {"times", "points", "covs"}, "probabilistic trajectory");
    const Vec t = vec_from_json(j.at("times"));
    Mat means = mat_from_json(j.at("points"));
    require(j.at("covs").is_array() && j.at("covs").size() == static_cast<std::size_t>(t.size()), ErrorKind::Config,
            "covs must have one entry per time");
    std::vector<Mat> covs;
    for (const auto& c : j.at("covs")) {
        covs.push_back(unflat(c, means.cols()));
    }
    return ProbTrajectory(std::vector<double>(t.data(), t.data() + t.size()), std::move(means), std::move(covs));
}

GmmModel gmm_from_json(const Json& j) {
    require(j.is_object(), ErrorKind::Config, "GMM must be an object");
    check_keys(j, {"weights", "means", "covs", "input_min", "input_max"}, "GMM");
    GmmModel m;
    const Vec w = vec_from_json(j.at("weights"));
    m.weights.assign(w.data(), w.data() + w.size());
    for (const auto& v : j.at("means")) {
        m.means.push_back(vec_from_json(v));
    }
    for (const auto& c : j.at("covs")) {
        m.covariances.push_back(mat_from_json(c));
    }
    m.input_min = get_number<double>(j.at("input_min"), "input_min");
    m.input_max = get_number<double>(j.at("input_max"), "input_max");
    m.validate();
    return m;
}

Json to_json(const ViaPoint& v) {
    return Json{{"time", v.time}, {"mean", to_json(v.mean)}, {"covariance", to_json(v.covariance)}};
}

Json to_json(const ForceEvent& e) {
    Json a = Json::array({e.time});
    for (Eigen::Index i = 0; i < e.force.size(); ++i) {
        a.push_back(e.force[i]);
    }
    return a;
}

Json to_json(const ForceSegment& s) {
    return Json{{"t_start", s.t_start}, {"t_end", s.t_end}, {"peak_force", to_json(s.peak_force)}};
}

Json to_json(const IterationMetrics& m) {
    return Json{{"M1", m.m1}, {"M2", m.sparc}, {"keypoint_rms", m.keypoint_rms}, {"track_rms", m.track_rms}};
}

Json to_json(const GmmFitReport& r) {
    return Json{{"iterations", r.iterations},
                {"reseeds", r.reseeds},
                {"converged", r.converged},
                {"log_likelihood", r.log_likelihood.empty() ? Json(nullptr) : Json(r.log_likelihood.back())}};
}

Json to_json(const PlsModel& m) {
    return Json{{"latent", m.latent},        {"x_mean", to_json(m.x_mean)}, {"y_mean", to_json(m.y_mean)},
                {"B", to_json(m.B)},         {"W", to_json(m.W)},           {"P", to_json(m.P)},
                {"Q", to_json(m.Q)}};
}

Json to_json(const SkillModel& m) {
    return Json{{"schema_version", 1},
                {"layout", to_string(m.layout)},
                {"dims", m.dims},
                {"slot_times", m.slot_times},
                {"pls", to_json(m.pls)}};
}

Json to_json(const RobotImpedance& imp) {
    return Json{{"stiffness", to_json(Vec(imp.stiffness.diagonal()))},
                {"damping", to_json(Vec(imp.damping.diagonal()))},
                {"zero_impedance", imp.zero_impedance}};
}

Json to_json(const SessionConfig& c) {
    return Json{{"dims", c.dims},
                {"waypoints", c.waypoints},
                {"components", c.components},
                {"iterations", c.iterations},
                {"episodes", c.episodes},
                {"duration", c.duration},
                {"lambda_mean", c.lambda_mean},
                {"lambda_cov", c.lambda_cov},
                {"kernel_rho", c.kernel_rho},
                {"via_time_shift", c.via_time_shift},
                {"deformation_scale", c.deformation_scale},
                {"force_threshold", c.force_threshold},
                {"patient_robot", to_json(c.patient_robot)},
                {"therapist_robot", to_json(c.therapist_robot)},
                {"seed", c.seed},
                {"dt_sim", c.dt_sim},
                {"segment_min_gap", c.segment_min_gap},
                {"via_product", to_string(c.via_product)},
                {"variance_prefactor", to_string(c.variance_prefactor)},
                {"via_cov_scale", c.via_cov_scale},
                {"pls_latent", c.pls_latent},
                {"force_statistic", to_string(c.force_statistic)},
                {"preference_pool", c.preference_pool},
                {"sensor_noise", c.sensor_noise}};
}

Json to_json(const PatientSpec& p) {
    return Json{{"stage", p.stage},
                {"mass", p.mass},
                {"intent_stiffness", p.intent_stiffness},
                {"intent_damping", p.intent_damping},
                {"band_anchor", to_json(p.band_anchor)},
                {"band_stiffness", p.band_stiffness},
                {"band_rest_length", p.band_rest_length},
                {"path_jitter", p.path_jitter},
                {"adaptation_rate", p.adaptation_rate},
                {"retention", p.retention}};
}

Json to_json(const ScriptedTherapist& t) {
    return Json{{"deviation_threshold", t.deviation_threshold},
                {"pulse_force", t.pulse_force},
                {"pulse_duration", t.pulse_duration}};
}

Json to_json(const VicParams& v) {
    return Json{{"k_min", v.k_min}, {"k_max", v.k_max}, {"e_ref", v.e_ref}, {"zeta", v.zeta}};
}

Vec vec_from_json(const Json& j, Eigen::Index expected) {
    require(j.is_array(), ErrorKind::Config, "expected an array of numbers");
    if (expected >= 0) {
        require(static_cast<Eigen::Index>(j.size()) == expected, ErrorKind::Config,
                "expected " + std::to_string(expected) + " numbers, got " + std::to_string(j.size()));
    }
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = get_number<double>(j[i], "array entry");
    }
    return v;
}

Mat mat_from_json(const Json& j) {
    require(j.is_array(), ErrorKind::Config, "expected an array of rows");
    if (j.empty()) {
        return Mat(0, 0);
    }
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Mat m(static_cast<Eigen::Index>(j.size()), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        m.row(static_cast<Eigen::Index>(r)) = vec_from_json(j[r], cols).transpose();
    }
    return m;
}

TimedTrajectory trajectory_from_json(const Json& j) {
    require(j.is_object(), ErrorKind::Config, "trajectory must be an object");
    check_keys(j, {"dt", "points"}, "trajectory");
    return TimedTrajectory(get_number<double>(j.at("dt"), "dt"), mat_from_json(j.at("points")));
}

ViaPoint via_from_json(const Json& j) {
    require(j.is_object(), ErrorKind::Config, "via-point must be an object");
    check_keys(j, {"time", "mean", "covariance"}, "via-point");
    ViaPoint v;
    v.time = get_number<double>(j.at("time"), "via time");
    v.mean = vec_from_json(j.at("mean"));
    v.covariance = mat_from_json(j.at("covariance"));
    return v;
}

ForceEvent event_from_json(const Json& j) {
    require(j.is_array() && j.size() >= 2, ErrorKind::Config, "force event must be [t, f...]");
    ForceEvent e;
    e.time = get_number<double>(j[0], "event time");
    e.force.resize(static_cast<Eigen::Index>(j.size() - 1));
    for (std::size_t i = 1; i < j.size(); ++i) {
        e.force[static_cast<Eigen::Index>(i - 1)] = get_number<double>(j[i], "event force");
    }
    return e;
}

PlsModel pls_from_json(const Json& j) {
    require(j.is_object(), ErrorKind::Config, "PLS model must be an object");
    PlsModel m;
    m.latent = get_count(j.at("latent"), "latent");
    m.x_mean = vec_from_json(j.at("x_mean"));
    m.y_mean = vec_from_json(j.at("y_mean"));
    m.B = mat_from_json(j.at("B"));
    with(j, "W", [&](const Json& v) { m.W = mat_from_json(v); });
    with(j, "P", [&](const Json& v) { m.P = mat_from_json(v); });
    with(j, "Q", [&](const Json& v) { m.Q = mat_from_json(v); });
    m.validate();
    return m;
}

SkillModel skill_model_from_json(const Json& j) {
    require(j.is_object(), ErrorKind::Config, "skill model must be an object");
    check_keys(j, {"schema_version", "layout", "dims", "slot_times", "pls"}, "skill model");
    require(j.value("schema_version", 0) == 1, ErrorKind::Config, "unsupported skill model schema_version");
    SkillModel m;
    m.layout = parse_skill_layout(get_string(j.at("layout"), "layout"));
    m.dims = static_cast<Eigen::Index>(get_count(j.at("dims"), "dims"));
    const Vec slots = vec_from_json(j.at("slot_times"));
    m.slot_times.assign(slots.data(), slots.data() + slots.size());
    m.pls = pls_from_json(j.at("pls"));
    require(m.pls.outputs() == static_cast<Eigen::Index>(m.slot_times.size()) * m.dims, ErrorKind::Config,
            "skill model output width does not match its slots");
    return m;
}

namespace {

RobotImpedance impedance_from_json(const Json& j, const RobotImpedance& base) {
    require(j.is_object(), ErrorKind::Config, "impedance must be an object");
    check_keys(j, {"stiffness", "damping", "zero_impedance"}, "impedance");
    Vec k = base.stiffness.diagonal();
    Vec d = base.damping.diagonal();
    with(j, "stiffness", [&](const Json& v) { k = vec_from_json(v); });
    with(j, "damping", [&](const Json& v) { d = vec_from_json(v); });
    require(k.size() == d.size(), ErrorKind::Config, "stiffness and damping sizes differ");
    RobotImpedance imp = RobotImpedance::diagonal(k, d);
    imp.zero_impedance = base.zero_impedance;
    with(j, "zero_impedance", [&](const Json& v) {
        require(v.is_boolean(), ErrorKind::Config, "zero_impedance must be a boolean");
        imp.zero_impedance = v.get<bool>();
    });
    return imp;
}

}  // namespace

SessionConfig config_from_json(const Json& j, SessionConfig c) {
    require(j.is_object(), ErrorKind::Config, "config must be an object");
    check_keys(j,
               {"dims", "waypoints", "components", "iterations", "episodes", "duration", "lambda_mean", "lambda_cov",
                "kernel_rho", "via_time_shift", "deformation_scale", "force_threshold", "patient_robot",
                "therapist_robot", "seed", "dt_sim", "segment_min_gap", "via_product", "variance_prefactor",
                "via_cov_scale", "pls_latent", "force_statistic", "preference_pool", "sensor_noise"},
               "config");
    with(j, "dims", [&](const Json& v) { c.dims = static_cast<Eigen::Index>(get_count(v, "dims")); });
    with(j, "waypoints", [&](const Json& v) { c.waypoints = get_count(v, "waypoints"); });
    with(j, "components", [&](const Json& v) { c.components = get_count(v, "components"); });
    with(j, "iterations", [&](const Json& v) { c.iterations = get_count(v, "iterations"); });
    with(j, "episodes", [&](const Json& v) { c.episodes = get_count(v, "episodes"); });
    with(j, "duration", [&](const Json& v) { c.duration = get_number<double>(v, "duration"); });
    with(j, "lambda_mean", [&](const Json& v) { c.lambda_mean = get_number<double>(v, "lambda_mean"); });
    with(j, "lambda_cov", [&](const Json& v) { c.lambda_cov = get_number<double>(v, "lambda_cov"); });
    with(j, "kernel_rho", [&](const Json& v) { c.kernel_rho = get_number<double>(v, "kernel_rho"); });
    with(j, "via_time_shift", [&](const Json& v) { c.via_time_shift = get_number<double>(v, "via_time_shift"); });
    with(j, "deformation_scale",
         [&](const Json& v) { c.deformation_scale = get_number<double>(v, "deformation_scale"); });
    with(j, "force_threshold", [&](const Json& v) { c.force_threshold = get_number<double>(v, "force_threshold"); });
    with(j, "patient_robot", [&](const Json& v) { c.patient_robot = impedance_from_json(v, c.patient_robot); });
    with(j, "therapist_robot", [&](const Json& v) { c.therapist_robot = impedance_from_json(v, c.therapist_robot); });
    with(j, "seed", [&](const Json& v) { c.seed = get_count(v, "seed"); });
    with(j, "dt_sim", [&](const Json& v) { c.dt_sim = get_number<double>(v, "dt_sim"); });
    with(j, "segment_min_gap", [&](const Json& v) { c.segment_min_gap = get_number<double>(v, "segment_min_gap"); });
    with(j, "via_product", [&](const Json& v) { c.via_product = parse_via_product(get_string(v, "via_product")); });
    with(j, "variance_prefactor", [&](const Json& v) {
        c.variance_prefactor = parse_variance_prefactor(get_string(v, "variance_prefactor"));
    });
    with(j, "via_cov_scale", [&](const Json& v) { c.via_cov_scale = get_number<double>(v, "via_cov_scale"); });
    with(j, "pls_latent", [&](const Json& v) { c.pls_latent = get_count(v, "pls_latent"); });
    with(j, "force_statistic",
         [&](const Json& v) { c.force_statistic = parse_force_statistic(get_string(v, "force_statistic")); });
    with(j, "preference_pool", [&](const Json& v) { c.preference_pool = get_count(v, "preference_pool"); });
    with(j, "sensor_noise", [&](const Json& v) { c.sensor_noise = get_number<double>(v, "sensor_noise"); });
    c.validate();
    return c;
}

PatientSpec patient_from_json(const Json& j, PatientSpec p) {
    require(j.is_object(), ErrorKind::Config, "patient must be an object");
    check_keys(j,
               {"stage", "mass", "intent_stiffness", "intent_damping", "band_anchor", "band_stiffness",
                "band_rest_length", "path_jitter", "adaptation_rate", "retention"},
               "patient");
    with(j, "stage", [&](const Json& v) { p.stage = get_string(v, "stage"); });
    with(j, "mass", [&](const Json& v) { p.mass = get_number<double>(v, "mass"); });
    with(j, "intent_stiffness", [&](const Json& v) { p.intent_stiffness = get_number<double>(v, "intent_stiffness"); });
    with(j, "intent_damping", [&](const Json& v) { p.intent_damping = get_number<double>(v, "intent_damping"); });
    with(j, "band_anchor", [&](const Json& v) { p.band_anchor = vec_from_json(v); });
    with(j, "band_stiffness", [&](const Json& v) { p.band_stiffness = get_number<double>(v, "band_stiffness"); });
    with(j, "band_rest_length", [&](const Json& v) { p.band_rest_length = get_number<double>(v, "band_rest_length"); });
    with(j, "path_jitter", [&](const Json& v) { p.path_jitter = get_number<double>(v, "path_jitter"); });
    with(j, "adaptation_rate", [&](const Json& v) { p.adaptation_rate = get_number<double>(v, "adaptation_rate"); });
    with(j, "retention", [&](const Json& v) { p.retention = get_number<double>(v, "retention"); });
    return p;
}

ScriptedTherapist therapist_from_json(const Json& j, ScriptedTherapist t) {
    require(j.is_object(), ErrorKind::Config, "therapist must be an object");
    check_keys(j, {"deviation_threshold", "pulse_force", "pulse_duration"}, "therapist");
    with(j, "deviation_threshold",
         [&](const Json& v) { t.deviation_threshold = get_number<double>(v, "deviation_threshold"); });
    with(j, "pulse_force", [&](const Json& v) { t.pulse_force = get_number<double>(v, "pulse_force"); });
    with(j, "pulse_duration", [&](const Json& v) { t.pulse_duration = get_number<double>(v, "pulse_duration"); });
    return t;
}

VicParams vic_from_json(const Json& j, VicParams p) {
    require(j.is_object(), ErrorKind::Config, "vic must be an object");
    check_keys(j, {"k_min", "k_max", "e_ref", "zeta"}, "vic");
    with(j, "k_min", [&](const Json& v) { p.k_min = get_number<double>(v, "k_min"); });
    with(j, "k_max", [&](const Json& v) { p.k_max = get_number<double>(v, "k_max"); });
    with(j, "e_ref", [&](const Json& v) { p.e_ref = get_number<double>(v, "e_ref"); });
    with(j, "zeta", [&](const Json& v) { p.zeta = get_number<double>(v, "zeta"); });
    p.validate();
    return p;
}

std::string_view to_string(ViaProduct p) {
    switch (p) {
        case ViaProduct::Hadamard:
            return "hadamard";
        case ViaProduct::MagnitudeHadamard:
            return "magnitude_hadamard";
        case ViaProduct::NormDirection:
            return "norm_direction";
    }
    return "hadamard";
}

std::string_view to_string(VariancePrefactor p) {
    return p == VariancePrefactor::Extended ? "extended" : "reference";
}

std::string_view to_string(ForceStatistic s) {
    switch (s) {
        case ForceStatistic::Mean:
            return "mean";
        case ForceStatistic::Rms:
            return "rms";
        case ForceStatistic::Peak:
            return "peak";
    }
    return "mean";
}

std::string_view to_string(SkillLayout l) {
    return l == SkillLayout::Absolute ? "absolute" : "offset";
}

ViaProduct parse_via_product(std::string_view s) {
    if (s == "hadamard") return ViaProduct::Hadamard;
    if (s == "magnitude_hadamard") return ViaProduct::MagnitudeHadamard;
    if (s == "norm_direction") return ViaProduct::NormDirection;
    fail(ErrorKind::Config, "unknown via_product '" + std::string(s) + "'");
}

VariancePrefactor parse_variance_prefactor(std::string_view s) {
    if (s == "extended") return VariancePrefactor::Extended;
    if (s == "reference") return VariancePrefactor::Reference;
    fail(ErrorKind::Config, "unknown variance_prefactor '" + std::string(s) + "'");
}

ForceStatistic parse_force_statistic(std::string_view s) {
    if (s == "mean") return ForceStatistic::Mean;
    if (s == "rms") return ForceStatistic::Rms;
    if (s == "peak") return ForceStatistic::Peak;
    fail(ErrorKind::Config, "unknown force_statistic '" + std::string(s) + "'");
}

SkillLayout parse_skill_layout(std::string_view s) {
    if (s == "offset") return SkillLayout::Offset;
    if (s == "absolute") return SkillLayout::Absolute;
    fail(ErrorKind::Config, "unknown skill layout '" + std::string(s) + "'");
}

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
    for (const auto& item : j.items()) {
        const bool known = std::find(allowed.begin(), allowed.end(), item.key()) != allowed.end();
        require(known, ErrorKind::Config, "unknown key '" + item.key() + "' in " + std::string(where));
    }
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, path + ": " + e.what());
    }
}

void write_text_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot write " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(out.good(), ErrorKind::Io, "write failed for " + path);
}

}  // namespace aan
