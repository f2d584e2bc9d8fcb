#include "aan/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <spdlog/spdlog.h>

namespace aan {

void VicParams::validate() const {
    require(std::isfinite(k_min) && k_min >= 0.0, ErrorKind::Config, "VIC k_min must be >= 0");
    require(std::isfinite(k_max) && k_max >= k_min, ErrorKind::Config, "VIC k_max must be >= k_min");
    require(std::isfinite(e_ref) && e_ref > 0.0, ErrorKind::Config, "VIC e_ref must be > 0");
    require(std::isfinite(zeta) && zeta >= 0.0, ErrorKind::Config, "VIC damping ratio must be >= 0");
}

double vic_stiffness(const VicParams& p, double error_norm) {
    return p.k_min + (p.k_max - p.k_min) * std::min(1.0, error_norm / p.e_ref);
}

double vic_damping(const VicParams& p, double stiffness, double mass) {
    return 2.0 * p.zeta * std::sqrt(stiffness * mass);
}

ControlLaw vic_law(const VicParams& p, double mass) {
    p.validate();
    require(mass > 0.0, ErrorKind::InvalidArgument, "mass must be > 0");
    return [p, mass](const ControlInput& in) -> Vec {
        const Vec e = in.x_ref - in.x;
        const double k = vic_stiffness(p, e.norm());
        return k * e + vic_damping(p, k, mass) * (in.v_ref - in.v);
    };
}

ControlLaw direct_force_law(std::span<const ForceEvent> events, const SessionConfig& cfg) {
    const std::size_t steps = static_cast<std::size_t>(std::llround(cfg.duration / cfg.dt_sim)) + 1;
    auto track = std::make_shared<const ForceTrack>(events, cfg.dt_sim, steps, cfg.dims);
    return [track](const ControlInput& in) -> Vec { return track->at(in.step); };
}

namespace {

TherapySession baseline_shell(const SessionConfig& cfg, const Task& task, const PatientSpec& patient) {
    cfg.validate();
    task.validate(cfg);
    patient.validate(cfg.dims);
    TherapySession s;
    s.cfg = cfg;
    s.task = task;
    s.patient = patient;
    s.reference = task.desired;
    return s;
}

void push_iteration(TherapySession& s, std::size_t i, const ControlLaw& law, std::vector<ForceEvent> events) {
    IterationRecord rec;
    rec.iteration = i;
    rec.reference = s.reference;
    rec.segments = detect_segments(events, s.cfg.force_threshold, s.cfg.segment_min_gap);
    rec.events = std::move(events);
    rec.episodes = run_episodes(s.cfg, s.task, s.patient, s.reference, i, s.learned_offset, &law);
    rec.metrics = iteration_metrics(rec.episodes, s.task, s.cfg);
    s.learned_offset = adapt_patient(s.patient, s.learned_offset, rec.episodes);
    spdlog::info("baseline iteration {}: keypoint rms {:.4f} m, M1 {:.3f} N, SPARC {:.3f}", i,
                 rec.metrics.keypoint_rms, rec.metrics.m1, rec.metrics.sparc);
    s.log.push_back(std::move(rec));
    s.iteration = i;
}

}  // namespace

TherapySession baseline_vic_run(const SessionConfig& cfg, const Task& task, const PatientSpec& patient,
                                const VicParams& params) {
    TherapySession s = baseline_shell(cfg, task, patient);
    const ControlLaw law = vic_law(params, patient.mass);
    for (std::size_t i = 0; i <= cfg.iterations; ++i) {
        push_iteration(s, i, law, {});
    }
    return s;
}

TherapySession baseline_direct_force_run(const SessionConfig& cfg, const Task& task, const PatientSpec& patient,
                                         const ScriptedTherapist& therapist) {
    therapist.validate(cfg.force_threshold);
    TherapySession s = baseline_shell(cfg, task, patient);
    push_iteration(s, 0, direct_force_law({}, cfg), {});
    for (std::size_t i = 1; i <= cfg.iterations; ++i) {
        auto events = therapist_events_for(s, therapist);
        const ControlLaw law = direct_force_law(events, cfg);
        push_iteration(s, i, law, std::move(events));
    }
    return s;
}

}  // namespace aan
