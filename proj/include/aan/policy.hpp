#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aan/core.hpp"
#include "aan/gmm.hpp"
#include "aan/simdyn.hpp"
#include "aan/viapoint.hpp"

namespace aan {

struct Task {
    std::string name;
    std::vector<Vec> vertices;  // closed polygon, traversed from vertices[0] and back
    TimedTrajectory desired;    // x_e sampled at the simulation step
    std::vector<double> keypoint_times;

    void validate(const SessionConfig& cfg) const;
};

/// Constant-speed traversal of a closed polygon over `duration`.
TimedTrajectory polygon_path(std::span<const Vec> vertices, double duration, double dt);

/// Times at which the constant-speed traversal reaches each vertex after the start.
std::vector<double> corner_times(std::span<const Vec> vertices, double duration);

/// Interior corner times plus the midpoints of the first and last edge.
std::vector<double> default_keypoint_times(std::span<const Vec> vertices, double duration);

Task polygon_task(std::string name, std::vector<Vec> vertices, const SessionConfig& cfg,
                  std::vector<double> keypoint_times = {});
Task triangle_task(const SessionConfig& cfg);
Task rectangle_task(const SessionConfig& cfg);

/// Stage parameters of the simulated patient. The intended path is x_e plus a
/// smooth per-episode wobble of amplitude path_jitter.
struct PatientSpec {
    std::string stage = "stage1";
    double mass = 2.0;
    double intent_stiffness = 150.0;
    double intent_damping = 20.0;
    Vec band_anchor = (Vec(2) << 0.40, -0.55).finished();
    double band_stiffness = 30.0;
    double band_rest_length = 0.40;
    double path_jitter = 0.003;  // m
    // Trial-to-trial learning: after each iteration the intended path shifts by
    // adaptation_rate times the smoothed mean assistance force, and earlier
    // shifts decay by `retention`. Zero rate keeps the patient static.
    double adaptation_rate = 0.0;  // m/N
    double retention = 1.0;

    void validate(Eigen::Index dims) const;
};

PatientSpec stage1_patient();
PatientSpec stage2_patient();

/// Patient for one episode; the wobble is drawn from `seed`.
PatientModel make_patient(const PatientSpec& spec, const TimedTrajectory& desired, std::uint64_t seed,
                          const Mat* learned_offset = nullptr);

/// Next learned intent offset (rows match the desired path) from one iteration's episodes.
Mat adapt_patient(const PatientSpec& spec, const Mat& offset, std::span<const EpisodeLog> episodes);

struct ScriptedTherapist {
    double deviation_threshold = 0.01;  // m
    double pulse_force = 15.0;          // N
    double pulse_duration = 0.1;        // s

    void validate(double force_threshold) const;
};

/// Pulses at keypoints where the patient is off x_e by more than the
/// threshold, sampled every dt and pointing toward x_e.
std::vector<ForceEvent> scripted_therapist_events(const ScriptedTherapist& th, const Task& task,
                                                  const TimedTrajectory& actual, double dt);

struct IterationMetrics {
    double m1 = 0.0;           // corrective force, configured statistic
    double sparc = 0.0;        // mean over episodes
    double keypoint_rms = 0.0;  // m
    double track_rms = 0.0;     // m
};

struct IterationRecord {
    std::size_t iteration = 0;  // 0 is the bootstrap pass
    ProbTrajectory preference;  // empty for the bootstrap pass
    Vec state;                  // s_i from the preference used for this iteration
    Vec state_post;             // s_i from the preference fitted on this iteration's episodes
    GmmFitReport gmm;
    std::vector<ForceEvent> events;
    std::vector<ForceSegment> segments;
    std::vector<ViaPoint> vias;
    std::vector<DroppedSegment> dropped;
    TimedTrajectory reference;
    std::vector<EpisodeLog> episodes;
    IterationMetrics metrics;
};

/// One therapist sample: state and the via-points it produced.
struct TherapistSample {
    Vec state;
    std::vector<ViaPoint> vias;
    TimedTrajectory reference;  // reference the vias were derived against
};

struct TherapySession {
    SessionConfig cfg;
    Task task;
    PatientSpec patient;
    std::size_t iteration = 0;  // completed iterations after the bootstrap
    std::vector<std::vector<EpisodeLog>> recent;  // D_P, newest last
    std::vector<TherapistSample> therapist_data;  // D_T
    TimedTrajectory reference;
    ProbTrajectory preference;  // fitted on `recent`, drives the next iteration
    GmmFitReport preference_fit;
    Mat learned_offset;  // patient intent shift accumulated so far
    std::vector<IterationRecord> log;
};

/// Supplies via-points for an iteration given the fresh preference.
using ViaSource = std::function<ViaDerivation(const TherapySession&, const ProbTrajectory& preference)>;

/// Via-points from a force event stream against the session's reference.
ViaSource event_via_source(std::vector<ForceEvent> events);

/// Bootstrap pass: J episodes on x_e, then the first preference fit.
TherapySession start_session(const SessionConfig& cfg, const Task& task, const PatientSpec& patient);

/// Everything one iteration produces, computed without touching the session.
struct PendingIteration {
    IterationRecord record;
    std::vector<std::vector<EpisodeLog>> recent;
    ProbTrajectory preference;
    GmmFitReport preference_fit;
    Mat learned_offset;
    TherapistSample sample;
};

PendingIteration prepare_iteration(const TherapySession& session, const ViaSource& vias,
                                   std::vector<ForceEvent> events = {});

/// Applies a prepared iteration; the session is unchanged if this throws.
void commit_iteration(TherapySession& session, PendingIteration&& next);

/// One policy iteration. Strong exception guarantee: on error the session is untouched.
void advance_session(TherapySession& session, const ViaSource& vias, std::vector<ForceEvent> events = {});

TherapySession run_iteration(const TherapySession& session, std::span<const ForceEvent> events);

/// Bootstrap plus cfg.iterations iterations with the scripted therapist
/// judging the last episode of each previous iteration.
TherapySession run_session(const SessionConfig& cfg, const Task& task, const PatientSpec& patient,
                           const ScriptedTherapist& therapist);

/// Events the scripted therapist emits after watching the session's latest iteration.
std::vector<ForceEvent> therapist_events_for(const TherapySession& session, const ScriptedTherapist& therapist);

/// Flattened (mu_w - x_e) over the N grid, waypoint-major.
Vec build_therapist_state(const ProbTrajectory& preference, const TimedTrajectory& desired, std::size_t n);

/// Preference from episode pools: GMM over resampled (t, x) then GMR on the grid.
ProbTrajectory encode_preference(std::span<const std::vector<EpisodeLog>> pools, const SessionConfig& cfg,
                                 std::uint64_t seed, GmmFitReport* report = nullptr);

IterationMetrics iteration_metrics(std::span<const EpisodeLog> episodes, const Task& task, const SessionConfig& cfg);

/// J episodes of iteration `iteration` on the given reference, patients seeded per episode.
std::vector<EpisodeLog> run_episodes(const SessionConfig& cfg, const Task& task, const PatientSpec& patient,
                                     const TimedTrajectory& reference, std::size_t iteration,
                                     const Mat& learned_offset, const ControlLaw* law = nullptr);

}  // namespace aan
