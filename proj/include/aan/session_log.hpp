#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "aan/scenario.hpp"

namespace aan {

/// Display resolution cap for trajectories sent to plots and the console.
inline constexpr std::size_t kDisplaySamples = 500;

/// Evenly strided sample indices, at most `max_samples`, always starting at 0.
std::vector<std::size_t> display_indices(std::size_t n, std::size_t max_samples = kDisplaySamples);

/// {"t": [...], "x": [[...], ...]} at display resolution.
Json display_trajectory(const TimedTrajectory& traj, std::size_t max_samples = kDisplaySamples);

/// Preference mean with a two-sigma band per axis.
Json preference_band(const ProbTrajectory& pref);

Json session_header(const Scenario& scenario, std::string_view method);

/// One JSONL record. Per-step data stays in the episode CSVs.
Json iteration_json(const IterationRecord& rec, const TherapySession& session, bool with_reference);

/// Header line plus one line per iteration, newline-terminated.
std::string session_jsonl(const Scenario& scenario, std::string_view method, const TherapySession& session);

/// iteration,M1,M2,track_rms
std::string metrics_csv(const TherapySession& session);

/// Everything one iteration's figure panels need.
Json plot_json(const IterationRecord& rec, const Task& task);

struct WriteOptions {
    bool episodes = false;  // per-step CSV for every episode (large)
    bool plots = true;
};

/// session.jsonl, metrics.csv, plot/iter_XX.json and optionally episodes/.
void write_session_dir(const std::string& dir, const Scenario& scenario, std::string_view method,
                       const TherapySession& session, const WriteOptions& opt = {});

struct SessionFile {
    Json header;
    Scenario scenario;
    std::string method;
    std::vector<Json> iterations;
};

SessionFile read_session_jsonl(const std::string& path);

/// D_T rebuilt from a proposed-method log: state and vias of each iteration
/// with the reference the vias were derived against.
std::vector<TherapistSample> therapist_samples(const SessionFile& file);

/// Metrics recomputed from the episode CSVs in `dir`, in metrics_csv form.
std::string recompute_metrics_csv(const std::string& dir);

std::string episode_file_name(std::size_t iteration, std::size_t episode);

}  // namespace aan
