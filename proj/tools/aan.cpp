#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "aan/baselines.hpp"
#include "aan/format.hpp"
#include "aan/scenario.hpp"
#include "aan/service.hpp"
#include "aan/session_log.hpp"
#include "aan/skill.hpp"

namespace fs = std::filesystem;
using namespace aan;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitScenario = 2;
constexpr int kExitDiverged = 3;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Io:
            return kExitScenario;
        case ErrorKind::Diverged:
        case ErrorKind::IllConditioned:
        case ErrorKind::Conditioning:
        case ErrorKind::Degenerate:
        case ErrorKind::InsufficientData:
            return kExitDiverged;
        default:
            return kExitUsage;
    }
}

int report(std::string_view kind, const std::string& message, int code) {
    std::cerr << Json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
    return code;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("aan");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("AAN_LOG_LEVEL")) {
        const auto level = spdlog::level::from_str(lvl);
        // from_str maps unknown names to off; only accept real names.
        if (level != spdlog::level::off || std::string_view(lvl) == "off") {
            spdlog::set_level(level);
        } else {
            spdlog::warn("ignoring unknown AAN_LOG_LEVEL '{}'", lvl);
        }
    }
}

Scenario load(const std::string& path, const std::optional<std::uint64_t>& seed) {
    Scenario s = load_scenario(path);
    return seed ? with_seed(std::move(s), *seed) : s;
}

TherapySession run_method(const Scenario& sc, std::string_view method) {
    if (method == "proposed") return run_session(sc.cfg, sc.task, sc.patient, sc.therapist);
    if (method == "vic") return baseline_vic_run(sc.cfg, sc.task, sc.patient, sc.vic);
    if (method == "direct") return baseline_direct_force_run(sc.cfg, sc.task, sc.patient, sc.therapist);
    fail(ErrorKind::InvalidArgument, "unknown method '" + std::string(method) + "'");
}

void emit(const std::string& out, const Scenario& sc, std::string_view method, const TherapySession& s,
          bool episodes) {
    WriteOptions opt;
    opt.episodes = episodes;
    write_session_dir(out, sc, method, s, opt);
    std::cout << metrics_csv(s);
}

std::string compare_table(const std::vector<std::pair<std::string, TherapySession>>& runs) {
    std::string out = "method,iteration,M1,M2,keypoint_rms,track_rms\n";
    for (const auto& [name, s] : runs) {
        for (const auto& rec : s.log) {
            out += name + ',' + std::to_string(rec.iteration) + ',';
            append_double(out, rec.metrics.m1);
            out += ',';
            append_double(out, rec.metrics.sparc);
            out += ',';
            append_double(out, rec.metrics.keypoint_rms);
            out += ',';
            append_double(out, rec.metrics.track_rms);
            out += '\n';
        }
    }
    return out;
}

int serve_forever(const Scenario& sc, const std::string& host, int port) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);  // worker threads inherit the mask
    SessionService service(sc);
    const int bound = service.start(host, port);
    std::cout << Json{{"listening", host}, {"port", bound}}.dump() << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    service.stop();
    return 0;
}

int validate_path(const std::string& path) {
    const fs::path p(path);
    if (fs::is_directory(p) || p.extension() == ".jsonl") {
        const auto file = read_session_jsonl(fs::is_directory(p) ? (p / "session.jsonl").string() : path);
        for (const auto& rec : file.iterations) {
            for (const auto& v : rec.at("vias")) {
                via_from_json(v);
            }
        }
        std::cout << Json{{"valid", true}, {"kind", "session"}, {"method", file.method},
                          {"iterations", file.iterations.size()}}
                         .dump()
                  << '\n';
        return 0;
    }
    const Scenario s = load_scenario(path);
    std::cout << Json{{"valid", true}, {"kind", "scenario"}, {"name", s.name}}.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Assist-as-needed therapy simulator"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool episodes = false;

    auto* run = app.add_subcommand("run", "Full session with the scripted therapist");
    run->add_option("scenario", scenario_path, "Scenario file")->required();
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--out", out_dir, "Output directory")->default_val("out/run");
    run->add_flag("--episodes", episodes, "Also write per-step episode CSVs");

    std::string method;
    auto* baseline = app.add_subcommand("baseline", "Comparison controller session");
    baseline->add_option("--method", method, "vic or direct")->required()->check(CLI::IsMember({"vic", "direct"}));
    baseline->add_option("scenario", scenario_path, "Scenario file")->required();
    baseline->add_option("--seed", seed, "Override the scenario seed");
    baseline->add_option("--out", out_dir, "Output directory")->default_val("out/baseline");
    baseline->add_flag("--episodes", episodes, "Also write per-step episode CSVs");

    auto* compare = app.add_subcommand("compare", "Proposed policy and both baselines on matched seeds");
    compare->add_option("scenario", scenario_path, "Scenario file")->required();
    compare->add_option("--seed", seed, "Override the scenario seed");
    compare->add_option("--out", out_dir, "Also write each session under this directory");

    std::vector<std::string> session_dirs;
    std::string model_path;
    std::size_t latent = 0;
    std::string layout;
    auto* train = app.add_subcommand("skill-train", "Fit the therapist skill model from proposed-method sessions");
    train->add_option("sessions", session_dirs, "Session directories")->required();
    train->add_option("--out", model_path, "Model file")->required();
    train->add_option("--latent", latent, "Latent components (default: scenario pls_latent)");
    train->add_option("--layout", layout, "offset or absolute (default: scenario)")
        ->check(CLI::IsMember({"offset", "absolute"}));

    auto* apply = app.add_subcommand("skill-apply", "Session driven by a skill model instead of a therapist");
    apply->add_option("model", model_path, "Model file")->required();
    apply->add_option("scenario", scenario_path, "Scenario file")->required();
    apply->add_option("--seed", seed, "Override the scenario seed");
    apply->add_option("--out", out_dir, "Output directory")->default_val("out/skill");
    apply->add_flag("--episodes", episodes, "Also write per-step episode CSVs");

    std::string session_dir;
    auto* metrics = app.add_subcommand("metrics", "Recompute M1/M2 from a session's episode CSVs");
    metrics->add_option("session", session_dir, "Session directory")->required();

    int port = 8080;
    std::string host = "127.0.0.1";
    auto* serve = app.add_subcommand("serve", "Serve a live session for the console");
    serve->add_option("scenario", scenario_path, "Scenario file")->required();
    serve->add_option("--port", port, "Port (0 picks a free one)")->default_val(8080);
    serve->add_option("--host", host, "Bind address")->default_val("127.0.0.1");
    serve->add_option("--seed", seed, "Override the scenario seed");

    std::string validate_target;
    auto* validate = app.add_subcommand("validate", "Check a scenario file or a session directory");
    validate->add_option("path", validate_target, "Scenario file, session directory or session.jsonl")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report("usage", e.what(), kExitUsage);
    }

    try {
        if (*run) {
            const Scenario sc = load(scenario_path, seed);
            emit(out_dir, sc, "proposed", run_method(sc, "proposed"), episodes);
        } else if (*baseline) {
            const Scenario sc = load(scenario_path, seed);
            emit(out_dir, sc, method, run_method(sc, method), episodes);
        } else if (*compare) {
            const Scenario sc = load(scenario_path, seed);
            const std::vector<std::string> methods{"proposed", "vic", "direct"};
            std::vector<std::future<TherapySession>> jobs;
            for (const auto& m : methods) {
                jobs.push_back(std::async(std::launch::async, [&sc, m] { return run_method(sc, m); }));
            }
            std::vector<std::pair<std::string, TherapySession>> runs;
            for (std::size_t k = 0; k < methods.size(); ++k) {
                runs.emplace_back(methods[k], jobs[k].get());
            }
            const std::string table = compare_table(runs);
            if (!out_dir.empty()) {
                for (const auto& [name, s] : runs) {
                    write_session_dir((fs::path(out_dir) / name).string(), sc, name, s);
                }
                write_text_file((fs::path(out_dir) / "compare.csv").string(), table);
            }
            std::cout << table;
        } else if (*train) {
            std::vector<SessionFile> files;
            for (const auto& d : session_dirs) {
                files.push_back(read_session_jsonl((fs::path(d) / "session.jsonl").string()));
            }
            const Scenario& first = files.front().scenario;
            SkillDataset data;
            data.slot_times = first.task.keypoint_times;
            data.dims = first.cfg.dims;
            data.layout = layout.empty() ? first.skill_layout : parse_skill_layout(layout);
            for (const auto& f : files) {
                require(f.scenario.task.name == first.task.name && f.scenario.task.keypoint_times == data.slot_times,
                        ErrorKind::Config, "skill training sessions must share one task");
                const auto samples = therapist_samples(f);
                append_samples(data, samples, f.scenario.cfg.via_time_shift);
            }
            data.validate();
            const SkillModel model = train_skill(data, latent > 0 ? latent : first.cfg.pls_latent);
            write_text_file(model_path, to_json(model).dump());
            std::cout << Json{{"model", model_path}, {"rows", data.X.rows()}, {"latent", model.pls.latent}}.dump()
                      << '\n';
        } else if (*apply) {
            const SkillModel model = skill_model_from_json(read_json_file(model_path));
            const Scenario sc = load(scenario_path, seed);
            require(model.slot_times == sc.task.keypoint_times, ErrorKind::Config,
                    "skill model was trained on a task with different keypoints");
            emit(out_dir, sc, "skill", run_skill_session(model, sc.cfg, sc.task, sc.patient), episodes);
        } else if (*metrics) {
            std::cout << recompute_metrics_csv(session_dir);
        } else if (*serve) {
            return serve_forever(load(scenario_path, seed), host, port);
        } else if (*validate) {
            return validate_path(validate_target);
        }
    } catch (const Error& e) {
        return report(to_string(e.kind()), e.what(), exit_code_for(e.kind()));
    } catch (const nlohmann::json::exception& e) {
        return report("config", e.what(), kExitScenario);
    } catch (const std::exception& e) {
        return report("internal", e.what(), kExitUsage);
    }
    return 0;
}
