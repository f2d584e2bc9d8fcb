#pragma once

#include <span>
#include <string>
#include <vector>

#include "aan/core.hpp"

namespace aan {

struct ForceSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    Vec peak_force;  // event force with the largest magnitude in the run
};

/// Runs of events with |f| > threshold. Runs closer than min_gap merge.
std::vector<ForceSegment> detect_segments(std::span<const ForceEvent> events, double threshold, double min_gap);

struct DroppedSegment {
    ForceSegment segment;
    double via_time = 0.0;
    std::string reason;
};

struct ViaDerivation {
    std::vector<ViaPoint> vias;
    std::vector<DroppedSegment> dropped;
};

/// Via mean = beta (x_e - mu_w) (*) u + x_r at t_v + dt, where (*) is the
/// configured product and u the unit peak force.
Vec via_mean(const Vec& desired, const Vec& preference, const Vec& reference, const Vec& force, double beta,
             ViaProduct product);

ViaDerivation derive_via_points(std::span<const ForceSegment> segments, const TimedTrajectory& desired,
                                const TimedTrajectory& reference, const ProbTrajectory& pref,
                                const SessionConfig& cfg);

/// Config error unless count <= N / 10.
void check_via_budget(std::size_t count, const SessionConfig& cfg);

}  // namespace aan
