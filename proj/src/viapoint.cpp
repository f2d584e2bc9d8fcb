#include "aan/viapoint.hpp"

#include <cmath>

#include "aan/format.hpp"

namespace aan {

std::vector<ForceSegment> detect_segments(std::span<const ForceEvent> events, double threshold, double min_gap) {
    require(std::isfinite(threshold) && threshold >= 0.0, ErrorKind::InvalidArgument, "threshold must be >= 0");
    require(std::isfinite(min_gap) && min_gap >= 0.0, ErrorKind::InvalidArgument, "min gap must be >= 0");
    std::vector<ForceSegment> out;
    bool open = false;         // last event belonged to a run
    double peak_norm = 0.0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        require(std::isfinite(e.time) && e.force.allFinite(), ErrorKind::InvalidArgument, "non-finite force event");
        if (i > 0) {
            require(e.time >= events[i - 1].time, ErrorKind::Ordering,
                    "force events not time-sorted at index " + std::to_string(i));
        }
        const double mag = e.force.norm();
        if (!(mag > threshold)) {
            open = false;
            continue;
        }
        // With a gap the merge is purely temporal; without one a run ends at
        // the first sub-threshold sample.
        const bool merge =
            !out.empty() && (min_gap > 0.0 ? e.time - out.back().t_end < min_gap : open);
        if (merge) {
            auto& seg = out.back();
            seg.t_end = e.time;
            if (mag > peak_norm) {
                peak_norm = mag;
                seg.peak_force = e.force;
            }
        } else {
            out.push_back(ForceSegment{e.time, e.time, e.force});
            peak_norm = mag;
        }
        open = true;
    }
    return out;
}

Vec via_mean(const Vec& desired, const Vec& preference, const Vec& reference, const Vec& force, double beta,
             ViaProduct product) {
    const double mag = force.norm();
    require(mag > 0.0, ErrorKind::InvalidArgument, "via-point force must be non-zero");
    const Vec u = force / mag;
    const Vec dev = desired - preference;
    switch (product) {
        case ViaProduct::Hadamard:
            return beta * dev.cwiseProduct(u) + reference;
        case ViaProduct::MagnitudeHadamard:
            return beta * dev.cwiseAbs().cwiseProduct(u) + reference;
        case ViaProduct::NormDirection:
            break;
    }
    return beta * dev.norm() * u + reference;
}

ViaDerivation derive_via_points(std::span<const ForceSegment> segments, const TimedTrajectory& desired,
                                const TimedTrajectory& reference, const ProbTrajectory& pref,
                                const SessionConfig& cfg) {
    ViaDerivation out;
    for (const auto& seg : segments) {
        const double tv = seg.t_start + cfg.via_time_shift;
        if (tv > cfg.duration || tv <= 0.0) {
            out.dropped.push_back({seg, tv, "shifted time " + format_double(tv) + " s outside (0, " +
                                                format_double(cfg.duration) + "]"});
            continue;
        }
        ViaPoint v;
        v.time = tv;
        v.mean = via_mean(desired.position_at(tv), pref.mean_at(tv), reference.position_at(tv), seg.peak_force,
                          cfg.deformation_scale, cfg.via_product);
        v.covariance = pref.covariance_at(tv) * cfg.via_cov_scale;
        out.vias.push_back(std::move(v));
    }
    check_via_budget(out.vias.size(), cfg);
    return out;
}

void check_via_budget(std::size_t count, const SessionConfig& cfg) {
    require(count * 10 <= cfg.waypoints, ErrorKind::Config,
            std::to_string(count) + " via-points exceed the budget of N/10 = " +
                std::to_string(cfg.waypoints / 10));
}

}  // namespace aan
