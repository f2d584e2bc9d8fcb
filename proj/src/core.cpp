#include "aan/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aan {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::OutOfRange: return "out_of_range";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Ordering: return "ordering";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::IllConditioned: return "ill_conditioned";
    case ErrorKind::Conditioning: return "conditioning";
    case ErrorKind::Diverged: return "diverged";
    case ErrorKind::Config: return "config";
    case ErrorKind::Busy: return "busy";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

namespace {

constexpr double kSnapTolerance = 1e-9;

struct Bracket {
    Eigen::Index lo;
    Eigen::Index hi;
    double frac;
};

// Position of t on a uniform grid. Times within kSnapTolerance (in grid units)
// of a sample land exactly on it, so grid-aligned queries return stored values.
Bracket locate_uniform(double t, double dt, Eigen::Index n) {
    if (n == 1 || t <= 0.0) {
        return {0, 0, 0.0};
    }
    const double u = t / dt;
    const double nearest = std::round(u);
    if (std::abs(u - nearest) < kSnapTolerance) {
        const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(nearest), n - 1);
        return {k, k, 0.0};
    }
    if (u >= static_cast<double>(n - 1)) {
        return {n - 1, n - 1, 0.0};
    }
    const auto lo = static_cast<Eigen::Index>(std::floor(u));
    return {lo, lo + 1, u - static_cast<double>(lo)};
}

Vec interpolate_rows(const Mat& values, const Bracket& b) {
    if (b.lo == b.hi) {
        return values.row(b.lo).transpose();
    }
    return ((1.0 - b.frac) * values.row(b.lo) + b.frac * values.row(b.hi)).transpose();
}

Bracket locate_sorted(const std::vector<double>& times, double t) {
    const auto n = static_cast<Eigen::Index>(times.size());
    if (t <= times.front()) {
        return {0, 0, 0.0};
    }
    if (t >= times.back()) {
        return {n - 1, n - 1, 0.0};
    }
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const auto hi = static_cast<Eigen::Index>(it - times.begin());
    const auto lo = hi - 1;
    const double span = times[static_cast<std::size_t>(hi)] - times[static_cast<std::size_t>(lo)];
    const double frac = (t - times[static_cast<std::size_t>(lo)]) / span;
    if (frac == 0.0) {
        return {lo, lo, 0.0};
    }
    return {lo, hi, frac};
}

}  // namespace

TimedTrajectory::TimedTrajectory(double dt, Mat positions, std::optional<Mat> velocities)
    : dt_(dt), positions_(std::move(positions)), velocities_(std::move(velocities)) {
    require(positions_.rows() > 0, ErrorKind::InvalidArgument, "trajectory needs at least one sample");
    require(std::isfinite(dt_) && dt_ > 0.0, ErrorKind::InvalidArgument, "trajectory dt must be positive");
    if (velocities_) {
        require(velocities_->rows() == positions_.rows() && velocities_->cols() == positions_.cols(),
                ErrorKind::Dimension, "velocity block must match position block");
    }
}

const Mat& TimedTrajectory::velocities() const {
    require(velocities_.has_value(), ErrorKind::InvalidArgument, "trajectory carries no velocities");
    return *velocities_;
}

Vec TimedTrajectory::position_at(double t) const {
    return interpolate_rows(positions_, locate_uniform(t, dt_, positions_.rows()));
}

Vec TimedTrajectory::velocity_at(double t) const {
    if (velocities_) {
        return interpolate_rows(*velocities_, locate_uniform(t, dt_, positions_.rows()));
    }
    return interpolate_rows(central_differences(positions_, dt_), locate_uniform(t, dt_, positions_.rows()));
}

TimedTrajectory TimedTrajectory::with_velocities() const {
    return TimedTrajectory(dt_, positions_, central_differences(positions_, dt_));
}

ProbTrajectory::ProbTrajectory(std::vector<double> times, Mat means, std::vector<Mat> covariances)
    : times_(std::move(times)), means_(std::move(means)), covs_(std::move(covariances)) {
    require(!times_.empty(), ErrorKind::InvalidArgument, "probabilistic trajectory needs at least one time");
    require(static_cast<Eigen::Index>(times_.size()) == means_.rows() && times_.size() == covs_.size(),
            ErrorKind::Dimension, "times, means and covariances must have equal length");
    for (std::size_t i = 1; i < times_.size(); ++i) {
        require(times_[i] > times_[i - 1], ErrorKind::Ordering, "times must be strictly increasing");
    }
    for (const auto& c : covs_) {
        require(c.rows() == means_.cols() && c.cols() == means_.cols(), ErrorKind::Dimension,
                "covariance size must match mean dimension");
    }
}

Vec ProbTrajectory::mean_at(double t) const {
    return interpolate_rows(means_, locate_sorted(times_, t));
}

Mat ProbTrajectory::covariance_at(double t) const {
    const Bracket b = locate_sorted(times_, t);
    if (b.lo == b.hi) {
        return covs_[static_cast<std::size_t>(b.lo)];
    }
    return (1.0 - b.frac) * covs_[static_cast<std::size_t>(b.lo)] + b.frac * covs_[static_cast<std::size_t>(b.hi)];
}

TimedTrajectory ProbTrajectory::mean_trajectory() const {
    const double dt = times_.size() > 1 ? times_[1] - times_[0] : 1.0;
    return TimedTrajectory(dt, means_);
}

RobotImpedance RobotImpedance::diagonal(const Vec& stiffness, const Vec& damping) {
    RobotImpedance imp;
    imp.stiffness = stiffness.asDiagonal();
    imp.damping = damping.asDiagonal();
    return imp;
}

RobotImpedance RobotImpedance::zero(Eigen::Index dims) {
    RobotImpedance imp;
    imp.stiffness = Mat::Zero(dims, dims);
    imp.damping = Mat::Zero(dims, dims);
    imp.zero_impedance = true;
    return imp;
}

void RobotImpedance::validate() const {
    require(stiffness.rows() == stiffness.cols() && damping.rows() == damping.cols() &&
                stiffness.rows() == damping.rows() && stiffness.rows() > 0,
            ErrorKind::Config, "impedance matrices must be square and of equal size");
    const Mat off_k = stiffness - Mat(stiffness.diagonal().asDiagonal());
    const Mat off_d = damping - Mat(damping.diagonal().asDiagonal());
    require(off_k.isZero(0.0) && off_d.isZero(0.0), ErrorKind::Config, "impedance matrices must be diagonal");
    for (Eigen::Index i = 0; i < stiffness.rows(); ++i) {
        const double k = stiffness(i, i);
        const double d = damping(i, i);
        require(std::isfinite(k) && std::isfinite(d) && k >= 0.0 && d >= 0.0, ErrorKind::Config,
                "impedance entries must be finite and non-negative");
        if (!zero_impedance) {
            require(k > 0.0 && d > 0.0, ErrorKind::Config,
                    "stiffness/damping entries must be positive unless zero-impedance mode is set");
        }
    }
}

void SessionConfig::validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    require(dims >= 1, ErrorKind::Config, "dims must be >= 1");
    require(waypoints >= 2, ErrorKind::Config, "N must be >= 2");
    require(components >= 1, ErrorKind::Config, "C must be >= 1");
    require(iterations >= 1, ErrorKind::Config, "I must be >= 1");
    require(episodes >= 1, ErrorKind::Config, "J must be >= 1");
    require(positive(duration), ErrorKind::Config, "duration must be > 0");
    require(positive(lambda_mean), ErrorKind::Config, "lambda_mean must be > 0");
    require(positive(lambda_cov), ErrorKind::Config, "lambda_cov must be > 0");
    require(positive(kernel_rho), ErrorKind::Config, "kernel_rho must be > 0");
    require(std::isfinite(via_time_shift) && via_time_shift >= 0.0 && via_time_shift < duration, ErrorKind::Config,
            "via_time_shift must lie in [0, duration)");
    require(std::isfinite(deformation_scale) && deformation_scale >= 0.0, ErrorKind::Config,
            "deformation_scale must be >= 0");
    require(positive(force_threshold), ErrorKind::Config, "force_threshold must be > 0");
    require(positive(dt_sim) && dt_sim <= duration, ErrorKind::Config, "dt_sim must be in (0, duration]");
    const double steps = duration / dt_sim;
    require(std::abs(steps - std::round(steps)) < 1e-6, ErrorKind::Config, "dt_sim must divide duration");
    require(std::isfinite(segment_min_gap) && segment_min_gap >= 0.0, ErrorKind::Config,
            "segment_min_gap must be >= 0");
    require(positive(via_cov_scale), ErrorKind::Config, "via_cov_scale must be > 0");
    require(pls_latent >= 1, ErrorKind::Config, "pls_latent must be >= 1");
    require(preference_pool >= 1, ErrorKind::Config, "preference_pool must be >= 1");
    require(std::isfinite(sensor_noise) && sensor_noise >= 0.0, ErrorKind::Config, "sensor_noise must be >= 0");
    patient_robot.validate();
    therapist_robot.validate();
    require(patient_robot.stiffness.rows() == dims && therapist_robot.stiffness.rows() == dims, ErrorKind::Config,
            "impedance size must match dims");
}

std::vector<double> uniform_times(std::size_t n_samples, double duration) {
    require(n_samples >= 2, ErrorKind::InvalidArgument, "need at least two samples");
    std::vector<double> times(n_samples);
    const double step = duration / static_cast<double>(n_samples - 1);
    for (std::size_t i = 0; i < n_samples; ++i) {
        times[i] = static_cast<double>(i) * step;
    }
    times.back() = duration;
    return times;
}

Mat central_differences(const Mat& positions, double dt) {
    const Eigen::Index n = positions.rows();
    Mat vel = Mat::Zero(n, positions.cols());
    if (n < 2) {
        return vel;
    }
    vel.row(0) = (positions.row(1) - positions.row(0)) / dt;
    vel.row(n - 1) = (positions.row(n - 1) - positions.row(n - 2)) / dt;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        vel.row(i) = (positions.row(i + 1) - positions.row(i - 1)) / (2.0 * dt);
    }
    return vel;
}

TimedTrajectory resample(const TimedTrajectory& traj, std::size_t n_samples, double duration) {
    require(n_samples >= 2, ErrorKind::InvalidArgument, "resample needs N >= 2");
    require(std::isfinite(duration) && duration > 0.0, ErrorKind::InvalidArgument, "resample duration must be > 0");
    require(traj.duration() >= duration - kSnapTolerance, ErrorKind::OutOfRange,
            "trajectory spans " + std::to_string(traj.duration()) + " s, shorter than requested " +
                std::to_string(duration) + " s");
    const auto times = uniform_times(n_samples, duration);
    Mat out(static_cast<Eigen::Index>(n_samples), traj.dims());
    for (std::size_t i = 0; i < n_samples; ++i) {
        out.row(static_cast<Eigen::Index>(i)) = traj.position_at(times[i]).transpose();
    }
    return TimedTrajectory(duration / static_cast<double>(n_samples - 1), std::move(out));
}

}  // namespace aan
