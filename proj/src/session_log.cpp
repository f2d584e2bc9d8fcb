#include "aan/session_log.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aan/format.hpp"
#include "aan/metrics.hpp"

namespace aan {

namespace fs = std::filesystem;

std::vector<std::size_t> display_indices(std::size_t n, std::size_t max_samples) {
    require(max_samples >= 1, ErrorKind::InvalidArgument, "display needs at least one sample");
    const std::size_t stride = n <= max_samples ? 1 : (n + max_samples - 1) / max_samples;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; i += stride) {
        out.push_back(i);
    }
    return out;
}

Json display_trajectory(const TimedTrajectory& traj, std::size_t max_samples) {
    Json t = Json::array();
    Json x = Json::array();
    for (auto i : display_indices(traj.size(), max_samples)) {
        t.push_back(traj.time(i));
        x.push_back(to_json(traj.position(i)));
    }
    return Json{{"t", std::move(t)}, {"x", std::move(x)}};
}

Json preference_band(const ProbTrajectory& pref) {
    Json mean = Json::array();
    Json lower = Json::array();
    Json upper = Json::array();
    for (std::size_t i = 0; i < pref.size(); ++i) {
        const Vec m = pref.mean(i);
        const Vec sd = pref.covariance(i).diagonal().cwiseMax(0.0).cwiseSqrt();
        mean.push_back(to_json(m));
        lower.push_back(to_json(Vec(m - 2.0 * sd)));
        upper.push_back(to_json(Vec(m + 2.0 * sd)));
    }
    return Json{{"t", pref.times()}, {"mean", std::move(mean)}, {"lower", std::move(lower)}, {"upper", std::move(upper)}};
}

Json session_header(const Scenario& scenario, std::string_view method) {
    return Json{{"type", "header"},
                {"schema_version", kScenarioSchemaVersion},
                {"method", method},
                {"scenario", scenario_to_json(scenario)}};
}

namespace {

template <typename T>
Json array_of(const std::vector<T>& items) {
    Json a = Json::array();
    for (const auto& item : items) {
        a.push_back(to_json(item));
    }
    return a;
}

}  // namespace

Json iteration_json(const IterationRecord& rec, const TherapySession& session, bool with_reference) {
    const auto& cfg = session.cfg;
    Json dropped = Json::array();
    for (const auto& d : rec.dropped) {
        dropped.push_back(Json{{"segment", to_json(d.segment)}, {"via_time", d.via_time}, {"reason", d.reason}});
    }
    Json episodes = Json::array();
    for (const auto& ep : rec.episodes) {
        const std::span<const EpisodeLog> one(&ep, 1);
        episodes.push_back(Json{{"M1", corrective_force_metric(ep, cfg.force_statistic)},
                                {"M2", episode_sparc(ep)},
                                {"keypoint_error", keypoint_error(ep.actual, session.task.desired,
                                                                  session.task.keypoint_times)},
                                {"track_rms", tracking_rms(one, session.task.desired)}});
    }
    Json j{{"type", "iteration"},
           {"iteration", rec.iteration},
           {"state", rec.state.size() > 0 ? to_json(rec.state) : Json(nullptr)},
           {"state_post", rec.state_post.size() > 0 ? to_json(rec.state_post) : Json(nullptr)},
           {"events", array_of(rec.events)},
           {"segments", array_of(rec.segments)},
           {"vias", array_of(rec.vias)},
           {"dropped", std::move(dropped)},
           {"gmm", rec.preference.size() > 0 ? to_json(rec.gmm) : Json(nullptr)},
           {"preference", rec.preference.size() > 0 ? to_json(rec.preference) : Json(nullptr)},
           {"reference", with_reference ? to_json(rec.reference) : Json(nullptr)},
           {"metrics", to_json(rec.metrics)},
           {"episodes", std::move(episodes)}};
    return j;
}

namespace {

bool logs_reference(std::string_view method) {
    return method == "proposed" || method == "skill";
}

}  // namespace

std::string session_jsonl(const Scenario& scenario, std::string_view method, const TherapySession& session) {
    std::string out = session_header(scenario, method).dump();
    out += '\n';
    for (const auto& rec : session.log) {
        out += iteration_json(rec, session, logs_reference(method)).dump();
        out += '\n';
    }
    return out;
}

std::string metrics_csv(const TherapySession& session) {
    std::string out = "iteration,M1,M2,track_rms\n";
    for (const auto& rec : session.log) {
        out += std::to_string(rec.iteration);
        out += ',';
        append_double(out, rec.metrics.m1);
        out += ',';
        append_double(out, rec.metrics.sparc);
        out += ',';
        append_double(out, rec.metrics.track_rms);
        out += '\n';
    }
    return out;
}

Json plot_json(const IterationRecord& rec, const Task& task) {
    Json actuals = Json::array();
    Json force = Json::array();
    for (const auto& ep : rec.episodes) {
        actuals.push_back(display_trajectory(ep.actual));
        Json norms = Json::array();
        for (auto i : display_indices(ep.steps())) {
            norms.push_back(ep.control_forces.row(static_cast<Eigen::Index>(i)).norm());
        }
        force.push_back(std::move(norms));
    }
    Json vias = Json::array();
    for (const auto& v : rec.vias) {
        const Vec sd = v.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
        vias.push_back(Json{{"time", v.time}, {"mean", to_json(v.mean)}, {"sd", to_json(sd)}});
    }
    Json kp = Json::array();
    for (double t : task.keypoint_times) {
        kp.push_back(Json{{"time", t}, {"x", to_json(task.desired.position_at(t))}});
    }
    return Json{{"iteration", rec.iteration},
                {"desired", display_trajectory(task.desired)},
                {"keypoints", std::move(kp)},
                {"preference", rec.preference.size() > 0 ? preference_band(rec.preference) : Json(nullptr)},
                {"reference", display_trajectory(rec.reference)},
                {"actuals", std::move(actuals)},
                {"control_force_norm", std::move(force)},
                {"therapist_events", array_of(rec.events)},
                {"vias", std::move(vias)},
                {"metrics", to_json(rec.metrics)}};
}

std::string episode_file_name(std::size_t iteration, std::size_t episode) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "iter_%02zu_ep_%zu.csv", iteration, episode);
    return buf;
}

void write_session_dir(const std::string& dir, const Scenario& scenario, std::string_view method,
                       const TherapySession& session, const WriteOptions& opt) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
    const fs::path root(dir);
    write_text_file((root / "session.jsonl").string(), session_jsonl(scenario, method, session));
    write_text_file((root / "metrics.csv").string(), metrics_csv(session));
    if (opt.plots) {
        fs::create_directories(root / "plot", ec);
        require(!ec, ErrorKind::Io, "cannot create plot directory: " + ec.message());
        for (const auto& rec : session.log) {
            char name[32];
            std::snprintf(name, sizeof(name), "iter_%02zu.json", rec.iteration);
            write_text_file((root / "plot" / name).string(), plot_json(rec, session.task).dump());
        }
    }
    if (opt.episodes) {
        fs::create_directories(root / "episodes", ec);
        require(!ec, ErrorKind::Io, "cannot create episodes directory: " + ec.message());
        for (const auto& rec : session.log) {
            for (std::size_t j = 0; j < rec.episodes.size(); ++j) {
                std::ofstream out(root / "episodes" / episode_file_name(rec.iteration, j), std::ios::binary);
                require(out.good(), ErrorKind::Io, "cannot write episode CSV");
                rec.episodes[j].write_csv(out);
            }
        }
    }
}

SessionFile read_session_jsonl(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Io, "cannot open " + path);
    SessionFile f;
    std::string line;
    std::size_t lineno = 0;
    try {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) {
                continue;
            }
            Json j = Json::parse(line);
            require(j.is_object() && j.contains("type"), ErrorKind::Config,
                    path + ":" + std::to_string(lineno) + ": record lacks a type");
            const auto type = j.at("type").get<std::string>();
            if (lineno == 1) {
                require(type == "header", ErrorKind::Config, path + ": first record is not a header");
                require(j.at("schema_version").get<int>() == kScenarioSchemaVersion, ErrorKind::Config,
                        path + ": unsupported schema_version");
                f.method = j.at("method").get<std::string>();
                f.scenario = parse_scenario(j.at("scenario"));
                f.header = std::move(j);
            } else {
                require(type == "iteration", ErrorKind::Config,
                        path + ":" + std::to_string(lineno) + ": unexpected record type '" + type + "'");
                require(j.at("iteration").get<std::size_t>() == f.iterations.size(), ErrorKind::Config,
                        path + ":" + std::to_string(lineno) + ": iterations out of sequence");
                f.iterations.push_back(std::move(j));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    require(lineno > 0, ErrorKind::Config, path + " is empty");
    return f;
}

std::vector<TherapistSample> therapist_samples(const SessionFile& file) {
    require(logs_reference(file.method), ErrorKind::InvalidArgument,
            "session method '" + file.method + "' carries no therapist samples");
    std::vector<TherapistSample> out;
    try {
        for (std::size_t i = 1; i < file.iterations.size(); ++i) {
            const Json& rec = file.iterations[i];
            TherapistSample s;
            s.state = vec_from_json(rec.at("state"));
            for (const auto& v : rec.at("vias")) {
                s.vias.push_back(via_from_json(v));
            }
            s.reference = trajectory_from_json(file.iterations[i - 1].at("reference"));
            out.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("malformed session log: ") + e.what());
    }
    return out;
}

std::string recompute_metrics_csv(const std::string& dir) {
    const fs::path root(dir);
    const SessionFile file = read_session_jsonl((root / "session.jsonl").string());
    const auto& cfg = file.scenario.cfg;
    const auto& task = file.scenario.task;
    std::string out = "iteration,M1,M2,track_rms\n";
    for (std::size_t i = 0; i < file.iterations.size(); ++i) {
        std::vector<EpisodeLog> eps;
        for (std::size_t j = 0; j < cfg.episodes; ++j) {
            const fs::path p = root / "episodes" / episode_file_name(i, j);
            std::ifstream in(p);
            require(in.good(), ErrorKind::Io, "missing episode file " + p.string() + " (run with --episodes)");
            eps.push_back(EpisodeLog::read_csv(in));
        }
        out += std::to_string(i);
        out += ',';
        append_double(out, corrective_force_metric(eps, cfg.force_statistic));
        out += ',';
        append_double(out, mean_sparc(eps));
        out += ',';
        append_double(out, tracking_rms(eps, task.desired));
        out += '\n';
    }
    return out;
}

}  // namespace aan
