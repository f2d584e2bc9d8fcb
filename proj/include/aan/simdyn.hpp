#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "aan/core.hpp"

namespace aan {

/// Elastic band tied between the patient's hand and a fixed anchor.
struct ElasticBand {
    Vec anchor;
    double stiffness = 0.0;    // N/m
    double rest_length = 0.0;  // m
};

/// Simulated stand-in for the human on the patient side: a point mass pulled
/// toward its own intended path and held back by an elastic band.
struct PatientModel {
    double mass = 2.0;              // kg, robot end effector plus arm
    double intent_stiffness = 0.0;  // N/m
    double intent_damping = 0.0;    // N s/m
    TimedTrajectory preferred_path;
    ElasticBand band;

    void validate() const;
};

struct EpisodeLog {
    TimedTrajectory actual;     // positions and velocities at every step
    Mat control_forces;         // f_ctrl,P per step
    Mat external_forces;        // f_ext,P per step
    TimedTrajectory reference;  // reference sampled at the step times

    std::size_t steps() const { return actual.size(); }
    void write_csv(std::ostream& os) const;
    void write_jsonl(std::ostream& os) const;
    static EpisodeLog read_csv(std::istream& is);
};

/// K (x_r - x) + D (v_r - v).
Vec impedance_force(const RobotImpedance& imp, const Vec& x_ref, const Vec& v_ref, const Vec& x, const Vec& v);

Vec band_force(const ElasticBand& band, const Vec& x);

/// Intent spring-damper toward the preferred path minus the band pull.
Vec patient_force(const PatientModel& patient, double t, const Vec& x, const Vec& v);

struct ControlInput {
    std::size_t step;
    double t;
    const Vec& x_ref;
    const Vec& v_ref;
    const Vec& x;
    const Vec& v;
};

/// Patient-side command; the default law is impedance_force with fixed gains.
using ControlLaw = std::function<Vec(const ControlInput&)>;

EpisodeLog run_episode(const SessionConfig& cfg, const RobotImpedance& imp, const PatientModel& patient,
                       const TimedTrajectory& reference, double dt_sim);

EpisodeLog run_episode(const SessionConfig& cfg, const ControlLaw& law, const PatientModel& patient,
                       const TimedTrajectory& reference, double dt_sim);

/// Events binned onto a step grid: force(k) is the sum of event forces whose
/// time rounds to step k.
class ForceTrack {
public:
    ForceTrack(std::span<const ForceEvent> events, double dt, std::size_t steps, Eigen::Index dims);
    Vec at(std::size_t step) const { return forces_.row(static_cast<Eigen::Index>(step)).transpose(); }

private:
    Mat forces_;
};

/// Therapist-side follower (unit mass) tracking the replayed patient motion
/// under the given impedance while the events push on it.
TimedTrajectory replay_with_forces(const TimedTrajectory& actual, std::span<const ForceEvent> events,
                                   const RobotImpedance& imp);

}  // namespace aan
