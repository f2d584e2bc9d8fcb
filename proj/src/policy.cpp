#include "aan/policy.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include <spdlog/spdlog.h>

#include "aan/format.hpp"
#include "aan/kmp.hpp"
#include "aan/metrics.hpp"
#include "aan/random.hpp"

namespace aan {

namespace {

constexpr std::uint64_t kTagPatient = 0x7a71e27ULL;
constexpr std::uint64_t kTagGmm = 0x63aaULL;

std::vector<double> cumulative_lengths(std::span<const Vec> vertices) {
    std::vector<double> acc{0.0};
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const Vec& a = vertices[i];
        const Vec& b = vertices[(i + 1) % vertices.size()];
        acc.push_back(acc.back() + (b - a).norm());
    }
    return acc;
}

void check_vertices(std::span<const Vec> vertices) {
    require(vertices.size() >= 2, ErrorKind::InvalidArgument, "polygon needs at least two vertices");
    for (const auto& v : vertices) {
        require(v.size() == vertices.front().size() && v.allFinite(), ErrorKind::Dimension,
                "polygon vertices must share a finite dimension");
    }
}

}  // namespace

TimedTrajectory polygon_path(std::span<const Vec> vertices, double duration, double dt) {
    check_vertices(vertices);
    require(duration > 0.0 && dt > 0.0, ErrorKind::InvalidArgument, "duration and dt must be > 0");
    const auto acc = cumulative_lengths(vertices);
    const double total = acc.back();
    require(total > 0.0, ErrorKind::InvalidArgument, "polygon has zero perimeter");
    const auto n = static_cast<std::size_t>(std::llround(duration / dt)) + 1;
    const auto d = vertices.front().size();
    Mat pos(static_cast<Eigen::Index>(n), d);
    std::size_t edge = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double s = total * std::min(1.0, static_cast<double>(k) / static_cast<double>(n - 1));
        while (edge + 1 < vertices.size() && s > acc[edge + 1]) {
            ++edge;
        }
        const Vec& a = vertices[edge];
        const Vec& b = vertices[(edge + 1) % vertices.size()];
        const double len = acc[edge + 1] - acc[edge];
        const double w = len > 0.0 ? (s - acc[edge]) / len : 0.0;
        pos.row(static_cast<Eigen::Index>(k)) = ((1.0 - w) * a + w * b).transpose();
    }
    TimedTrajectory path(duration / static_cast<double>(n - 1), std::move(pos));
    return path.with_velocities();
}

std::vector<double> corner_times(std::span<const Vec> vertices, double duration) {
    check_vertices(vertices);
    const auto acc = cumulative_lengths(vertices);
    std::vector<double> out;
    for (std::size_t i = 1; i < vertices.size(); ++i) {
        out.push_back(duration * acc[i] / acc.back());
    }
    return out;
}

std::vector<double> default_keypoint_times(std::span<const Vec> vertices, double duration) {
    const auto corners = corner_times(vertices, duration);
    std::vector<double> out{0.5 * corners.front()};
    out.insert(out.end(), corners.begin(), corners.end());
    out.push_back(0.5 * (corners.back() + duration));
    return out;
}

void Task::validate(const SessionConfig& cfg) const {
    require(!desired.empty(), ErrorKind::Config, "task has no desired motion");
    require(desired.dims() == cfg.dims, ErrorKind::Config, "task dimension does not match the configuration");
    require(desired.duration() >= cfg.duration - 1e-9, ErrorKind::Config,
            "desired motion shorter than the episode duration");
    require(!keypoint_times.empty(), ErrorKind::Config, "task needs at least one keypoint");
    for (std::size_t i = 0; i < keypoint_times.size(); ++i) {
        const double t = keypoint_times[i];
        require(std::isfinite(t) && t > 0.0 && t < cfg.duration, ErrorKind::Config,
                "keypoint times must lie strictly inside (0, duration)");
        require(i == 0 || t > keypoint_times[i - 1], ErrorKind::Config, "keypoint times must be increasing");
    }
    check_via_budget(keypoint_times.size(), cfg);
}

Task polygon_task(std::string name, std::vector<Vec> vertices, const SessionConfig& cfg,
                  std::vector<double> keypoint_times) {
    Task task;
    task.name = std::move(name);
    task.desired = polygon_path(vertices, cfg.duration, cfg.dt_sim);
    task.keypoint_times =
        keypoint_times.empty() ? default_keypoint_times(vertices, cfg.duration) : std::move(keypoint_times);
    task.vertices = std::move(vertices);
    task.validate(cfg);
    return task;
}

Task triangle_task(const SessionConfig& cfg) {
    return polygon_task("triangle",
                        {(Vec(2) << 0.40, -0.15).finished(), (Vec(2) << 0.55, 0.15).finished(),
                         (Vec(2) << 0.25, 0.15).finished()},
                        cfg);
}

Task rectangle_task(const SessionConfig& cfg) {
    return polygon_task("rectangle",
                        {(Vec(2) << 0.25, -0.15).finished(), (Vec(2) << 0.55, -0.15).finished(),
                         (Vec(2) << 0.55, 0.15).finished(), (Vec(2) << 0.25, 0.15).finished()},
                        cfg);
}

void PatientSpec::validate(Eigen::Index dims) const {
    require(std::isfinite(mass) && mass > 0.0, ErrorKind::Config, "patient mass must be > 0");
    require(intent_stiffness >= 0.0 && intent_damping >= 0.0, ErrorKind::Config, "patient gains must be >= 0");
    require(band_stiffness >= 0.0 && band_rest_length >= 0.0, ErrorKind::Config, "band parameters must be >= 0");
    require(band_anchor.size() == dims && band_anchor.allFinite(), ErrorKind::Config, "band anchor dimension");
    require(std::isfinite(path_jitter) && path_jitter >= 0.0, ErrorKind::Config, "path jitter must be >= 0");
    require(std::isfinite(adaptation_rate) && adaptation_rate >= 0.0, ErrorKind::Config,
            "adaptation rate must be >= 0");
    require(std::isfinite(retention) && retention >= 0.0 && retention <= 1.0, ErrorKind::Config,
            "retention must lie in [0, 1]");
}

namespace {

// Centred moving average with the window clipped at the ends.
Mat box_filter(const Mat& m, Eigen::Index half) {
    const auto n = m.rows();
    Mat prefix = Mat::Zero(n + 1, m.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        prefix.row(i + 1) = prefix.row(i) + m.row(i);
    }
    Mat out(n, m.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto lo = std::max<Eigen::Index>(0, i - half);
        const auto hi = std::min<Eigen::Index>(n, i + half + 1);
        out.row(i) = (prefix.row(hi) - prefix.row(lo)) / static_cast<double>(hi - lo);
    }
    return out;
}

}  // namespace

Mat adapt_patient(const PatientSpec& spec, const Mat& offset, std::span<const EpisodeLog> episodes) {
    require(!episodes.empty(), ErrorKind::InvalidArgument, "no episodes to adapt from");
    const Mat& f0 = episodes.front().control_forces;
    Mat mean = Mat::Zero(f0.rows(), f0.cols());
    for (const auto& ep : episodes) {
        require(ep.control_forces.rows() == f0.rows() && ep.control_forces.cols() == f0.cols(), ErrorKind::Dimension,
                "episodes differ in length");
        mean += ep.control_forces;
    }
    mean /= static_cast<double>(episodes.size());
    const Mat base = offset.size() > 0 ? offset : Mat::Zero(f0.rows(), f0.cols());
    require(base.rows() == f0.rows() && base.cols() == f0.cols(), ErrorKind::Dimension,
            "learned offset does not match the episode length");
    if (spec.adaptation_rate == 0.0) {
        return spec.retention * base;
    }
    // Two passes of a 0.1 s box give a smooth triangular kernel.
    const Eigen::Index half = std::max<Eigen::Index>(1, f0.rows() / 200);
    return spec.retention * base + spec.adaptation_rate * box_filter(box_filter(mean, half), half);
}

PatientSpec stage1_patient() {
    PatientSpec p;
    p.band_stiffness = 80.0;
    p.adaptation_rate = 0.003;
    return p;
}

PatientSpec stage2_patient() {
    PatientSpec p = stage1_patient();
    p.stage = "stage2";
    p.band_stiffness = 60.0;
    return p;
}

PatientModel make_patient(const PatientSpec& spec, const TimedTrajectory& desired, std::uint64_t seed,
                          const Mat* learned_offset) {
    spec.validate(desired.dims());
    Rng rng(seed);
    const double duration = desired.duration();
    const auto d = desired.dims();
    // Three low harmonics per axis with random phases and weights.
    constexpr int kHarmonics = 3;
    Mat amp(kHarmonics, d);
    Mat phase(kHarmonics, d);
    for (int h = 0; h < kHarmonics; ++h) {
        for (Eigen::Index a = 0; a < d; ++a) {
            amp(h, a) = spec.path_jitter * rng.uniform(-1.0, 1.0) / (h + 1);
            phase(h, a) = rng.uniform(0.0, 2.0 * M_PI);
        }
    }
    Mat pos = desired.positions();
    if (learned_offset != nullptr && learned_offset->size() > 0) {
        require(learned_offset->rows() == pos.rows() && learned_offset->cols() == pos.cols(), ErrorKind::Dimension,
                "learned offset does not match the desired path");
        pos += *learned_offset;
    }
    for (std::size_t k = 0; k < desired.size(); ++k) {
        const double t = desired.time(k);
        for (int h = 0; h < kHarmonics; ++h) {
            const double w = 2.0 * M_PI * (h + 1) * t / duration;
            for (Eigen::Index a = 0; a < d; ++a) {
                pos(static_cast<Eigen::Index>(k), a) += amp(h, a) * std::sin(w + phase(h, a));
            }
        }
    }
    PatientModel p;
    p.mass = spec.mass;
    p.intent_stiffness = spec.intent_stiffness;
    p.intent_damping = spec.intent_damping;
    p.preferred_path = TimedTrajectory(desired.dt(), std::move(pos)).with_velocities();
    p.band = ElasticBand{spec.band_anchor, spec.band_stiffness, spec.band_rest_length};
    return p;
}

void ScriptedTherapist::validate(double force_threshold) const {
    // +inf is allowed and disables the therapist.
    require(!std::isnan(deviation_threshold) && deviation_threshold >= 0.0, ErrorKind::Config,
            "therapist deviation threshold must be >= 0");
    require(pulse_force > force_threshold, ErrorKind::Config,
            "therapist pulse force must exceed the force threshold");
    require(std::isfinite(pulse_duration) && pulse_duration >= 0.0, ErrorKind::Config,
            "therapist pulse duration must be >= 0");
}

std::vector<ForceEvent> scripted_therapist_events(const ScriptedTherapist& th, const Task& task,
                                                  const TimedTrajectory& actual, double dt) {
    require(dt > 0.0, ErrorKind::InvalidArgument, "dt must be > 0");
    require(actual.duration() >= task.desired.duration() - 1e-9, ErrorKind::OutOfRange,
            "patient trajectory shorter than the task");
    const auto last_step = std::llround(task.desired.duration() / dt);
    const auto half = std::llround(0.5 * th.pulse_duration / dt);
    std::vector<ForceEvent> out;
    for (double tk : task.keypoint_times) {
        const Vec dev = task.desired.position_at(tk) - actual.position_at(tk);
        const double mag = dev.norm();
        if (!(mag > th.deviation_threshold) || mag == 0.0) {
            continue;
        }
        const Vec f = th.pulse_force * dev / mag;
        const auto centre = std::llround(tk / dt);
        for (auto k = std::max(0LL, centre - half); k <= std::min(last_step, centre + half); ++k) {
            out.push_back(ForceEvent{static_cast<double>(k) * dt, f});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const ForceEvent& a, const ForceEvent& b) { return a.time < b.time; });
    return out;
}

Vec build_therapist_state(const ProbTrajectory& preference, const TimedTrajectory& desired, std::size_t n) {
    require(preference.size() == n, ErrorKind::Dimension,
            "preference has " + std::to_string(preference.size()) + " waypoints, expected " + std::to_string(n));
    require(preference.dims() == desired.dims(), ErrorKind::Dimension, "preference and x_e dimension differ");
    const auto d = preference.dims();
    Vec s(static_cast<Eigen::Index>(n) * d);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec xe = desired.position_at(preference.times()[i]);
        for (Eigen::Index a = 0; a < d; ++a) {
            s[static_cast<Eigen::Index>(i) * d + a] = preference.means()(static_cast<Eigen::Index>(i), a) - xe[a];
        }
    }
    return s;
}

ProbTrajectory encode_preference(std::span<const std::vector<EpisodeLog>> pools, const SessionConfig& cfg,
                                 std::uint64_t seed, GmmFitReport* report) {
    std::vector<TimedTrajectory> samples;
    for (const auto& pool : pools) {
        for (const auto& ep : pool) {
            samples.push_back(resample(ep.actual, cfg.waypoints, cfg.duration));
        }
    }
    require(!samples.empty(), ErrorKind::InsufficientData, "no episodes to encode a preference from");
    const auto grid = uniform_times(cfg.waypoints, cfg.duration);
    const auto n = static_cast<Eigen::Index>(cfg.waypoints);
    Mat data(n * static_cast<Eigen::Index>(samples.size()), 1 + cfg.dims);
    for (std::size_t j = 0; j < samples.size(); ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index row = static_cast<Eigen::Index>(j) * n + i;
            data(row, 0) = grid[static_cast<std::size_t>(i)];
            data.row(row).tail(cfg.dims) = samples[j].positions().row(i);
        }
    }
    const GmmModel model = fit_gmm(data, cfg.components, seed, report);
    return gmr_condition(model, grid);
}

IterationMetrics iteration_metrics(std::span<const EpisodeLog> episodes, const Task& task, const SessionConfig& cfg) {
    IterationMetrics m;
    m.m1 = corrective_force_metric(episodes, cfg.force_statistic);
    m.sparc = mean_sparc(episodes);
    m.keypoint_rms = keypoint_rms(episodes, task.desired, task.keypoint_times);
    m.track_rms = tracking_rms(episodes, task.desired);
    return m;
}

std::vector<EpisodeLog> run_episodes(const SessionConfig& cfg, const Task& task, const PatientSpec& patient,
                                     const TimedTrajectory& reference, std::size_t iteration,
                                     const Mat& learned_offset, const ControlLaw* law) {
    std::vector<EpisodeLog> out;
    out.reserve(cfg.episodes);
    for (std::size_t j = 0; j < cfg.episodes; ++j) {
        const PatientModel p = make_patient(patient, task.desired, derive_seed(cfg.seed ^ kTagPatient, iteration, j),
                                            &learned_offset);
        if (law != nullptr) {
            out.push_back(run_episode(cfg, *law, p, reference, cfg.dt_sim));
        } else {
            out.push_back(run_episode(cfg, cfg.patient_robot, p, reference, cfg.dt_sim));
        }
    }
    return out;
}

namespace {

std::uint64_t gmm_seed(const SessionConfig& cfg, std::size_t iteration) {
    return derive_seed(cfg.seed ^ kTagGmm, iteration);
}

void refit_preference(TherapySession& s) {
    s.preference = encode_preference(s.recent, s.cfg, gmm_seed(s.cfg, s.iteration), &s.preference_fit);
}

}  // namespace

TherapySession start_session(const SessionConfig& cfg, const Task& task, const PatientSpec& patient) {
    cfg.validate();
    task.validate(cfg);
    patient.validate(cfg.dims);
    TherapySession s;
    s.cfg = cfg;
    s.task = task;
    s.patient = patient;
    s.reference = resample(task.desired, cfg.waypoints, cfg.duration).with_velocities();

    IterationRecord rec;
    rec.iteration = 0;
    rec.reference = s.reference;
    rec.episodes = run_episodes(cfg, task, patient, s.reference, 0, s.learned_offset);
    rec.metrics = iteration_metrics(rec.episodes, task, cfg);
    s.learned_offset = adapt_patient(patient, s.learned_offset, rec.episodes);
    s.recent.push_back(rec.episodes);
    refit_preference(s);
    rec.state_post = build_therapist_state(s.preference, task.desired, cfg.waypoints);
    spdlog::info("bootstrap: keypoint rms {:.4f} m, M1 {:.3f} N", rec.metrics.keypoint_rms, rec.metrics.m1);
    s.log.push_back(std::move(rec));
    return s;
}

ViaSource event_via_source(std::vector<ForceEvent> events) {
    return [events = std::move(events)](const TherapySession& s, const ProbTrajectory& preference) {
        const auto segments = detect_segments(events, s.cfg.force_threshold, s.cfg.segment_min_gap);
        return derive_via_points(segments, s.task.desired, s.reference, preference, s.cfg);
    };
}

PendingIteration prepare_iteration(const TherapySession& session, const ViaSource& source,
                                   std::vector<ForceEvent> events) {
    require(session.iteration < session.cfg.iterations, ErrorKind::InvalidArgument,
            "session already completed " + std::to_string(session.cfg.iterations) + " iterations");
    require(!session.log.empty(), ErrorKind::InvalidArgument, "session was not bootstrapped");
    const SessionConfig& cfg = session.cfg;
    const std::size_t i = session.iteration + 1;

    PendingIteration out;
    IterationRecord& rec = out.record;
    rec.iteration = i;
    rec.preference = session.preference;
    rec.gmm = session.preference_fit;
    rec.state = build_therapist_state(rec.preference, session.task.desired, cfg.waypoints);
    rec.segments = detect_segments(events, cfg.force_threshold, cfg.segment_min_gap);
    rec.events = std::move(events);
    ViaDerivation derived = source(session, rec.preference);
    for (const auto& d : derived.dropped) {
        spdlog::warn("iteration {}: dropped via-point: {}", i, d.reason);
    }
    rec.vias = std::move(derived.vias);
    rec.dropped = std::move(derived.dropped);
    rec.reference = deform_reference(rec.preference, rec.vias, session.task.desired, cfg);
    rec.episodes = run_episodes(cfg, session.task, session.patient, rec.reference, i, session.learned_offset);
    rec.metrics = iteration_metrics(rec.episodes, session.task, cfg);
    out.learned_offset = adapt_patient(session.patient, session.learned_offset, rec.episodes);

    out.recent = session.recent;
    out.recent.push_back(rec.episodes);
    while (out.recent.size() > cfg.preference_pool) {
        out.recent.erase(out.recent.begin());
    }
    out.preference = encode_preference(out.recent, cfg, gmm_seed(cfg, i), &out.preference_fit);
    rec.state_post = build_therapist_state(out.preference, session.task.desired, cfg.waypoints);
    out.sample = TherapistSample{rec.state, rec.vias, session.reference};
    return out;
}

void commit_iteration(TherapySession& session, PendingIteration&& next) {
    require(next.record.iteration == session.iteration + 1, ErrorKind::InvalidArgument,
            "pending iteration " + std::to_string(next.record.iteration) + " does not follow iteration " +
                std::to_string(session.iteration));
    session.therapist_data.reserve(session.therapist_data.size() + 1);
    session.log.reserve(session.log.size() + 1);
    // Nothing below throws.
    const auto& m = next.record.metrics;
    spdlog::info("iteration {}: {} vias, keypoint rms {:.4f} m, M1 {:.3f} N, SPARC {:.3f}", next.record.iteration,
                 next.record.vias.size(), m.keypoint_rms, m.m1, m.sparc);
    session.reference = next.record.reference;
    session.recent = std::move(next.recent);
    session.preference = std::move(next.preference);
    session.preference_fit = std::move(next.preference_fit);
    session.learned_offset = std::move(next.learned_offset);
    session.therapist_data.push_back(std::move(next.sample));
    session.iteration = next.record.iteration;
    session.log.push_back(std::move(next.record));
}

void advance_session(TherapySession& session, const ViaSource& source, std::vector<ForceEvent> events) {
    commit_iteration(session, prepare_iteration(session, source, std::move(events)));
}

TherapySession run_iteration(const TherapySession& session, std::span<const ForceEvent> events) {
    TherapySession next = session;
    std::vector<ForceEvent> ev(events.begin(), events.end());
    advance_session(next, event_via_source(ev), ev);
    return next;
}

std::vector<ForceEvent> therapist_events_for(const TherapySession& session, const ScriptedTherapist& therapist) {
    require(!session.log.empty() && !session.log.back().episodes.empty(), ErrorKind::InvalidArgument,
            "no episodes to judge");
    return scripted_therapist_events(therapist, session.task, session.log.back().episodes.back().actual,
                                     session.cfg.dt_sim);
}

TherapySession run_session(const SessionConfig& cfg, const Task& task, const PatientSpec& patient,
                           const ScriptedTherapist& therapist) {
    therapist.validate(cfg.force_threshold);
    TherapySession s = start_session(cfg, task, patient);
    while (s.iteration < cfg.iterations) {
        auto events = therapist_events_for(s, therapist);
        advance_session(s, event_via_source(events), events);
    }
    return s;
}

}  // namespace aan
