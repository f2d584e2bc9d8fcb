#pragma once

#include <span>

#include "aan/core.hpp"
#include "aan/simdyn.hpp"

namespace aan {

/// Statistic of |f_ctrl| over the steps of one episode.
double corrective_force_metric(const EpisodeLog& log, ForceStatistic stat = ForceStatistic::Mean);

/// Mean of the per-episode metric.
double corrective_force_metric(std::span<const EpisodeLog> logs, ForceStatistic stat = ForceStatistic::Mean);

struct SparcOptions {
    double cutoff_hz = 10.0;
    double amplitude_threshold = 0.05;
    int padding_factor = 4;
};

/// Spectral arc length of a speed profile; closer to zero is smoother.
double sparc(std::span<const double> speed, double dt, const SparcOptions& opt = {});

/// |v| with v from central differences of the positions.
std::vector<double> speed_profile(const TimedTrajectory& traj);

double episode_sparc(const EpisodeLog& log);
double mean_sparc(std::span<const EpisodeLog> logs);

/// RMS over keypoints of |x_e(t_k) - x(t_k)|.
double keypoint_error(const TimedTrajectory& actual, const TimedTrajectory& desired, std::span<const double> keypoints);

/// RMS pooled over episodes and keypoints.
double keypoint_rms(std::span<const EpisodeLog> logs, const TimedTrajectory& desired,
                    std::span<const double> keypoints);

/// RMS of |x_e(t) - x(t)| over all steps, pooled over episodes.
double tracking_rms(std::span<const EpisodeLog> logs, const TimedTrajectory& desired);

}  // namespace aan
