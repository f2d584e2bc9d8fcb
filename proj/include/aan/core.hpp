#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "aan/error.hpp"

namespace aan {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Uniformly sampled motion record starting at t = 0. Row i of positions is the
/// point at time i * dt.
class TimedTrajectory {
public:
    TimedTrajectory() = default;
    TimedTrajectory(double dt, Mat positions, std::optional<Mat> velocities = std::nullopt);

    double dt() const { return dt_; }
    std::size_t size() const { return static_cast<std::size_t>(positions_.rows()); }
    Eigen::Index dims() const { return positions_.cols(); }
    bool empty() const { return positions_.rows() == 0; }
    double time(std::size_t i) const { return static_cast<double>(i) * dt_; }
    double duration() const { return empty() ? 0.0 : time(size() - 1); }

    const Mat& positions() const { return positions_; }
    Vec position(std::size_t i) const { return positions_.row(static_cast<Eigen::Index>(i)).transpose(); }

    bool has_velocities() const { return velocities_.has_value(); }
    const Mat& velocities() const;
    Vec velocity(std::size_t i) const { return velocities().row(static_cast<Eigen::Index>(i)).transpose(); }

    /// Linear interpolation; times outside [0, duration] clamp to the ends.
    Vec position_at(double t) const;
    /// Interpolated stored velocity, or the central-difference estimate if none is stored.
    Vec velocity_at(double t) const;

    /// Copy carrying central-difference velocities.
    TimedTrajectory with_velocities() const;

private:
    double dt_ = 1.0;
    Mat positions_;
    std::optional<Mat> velocities_;
};

/// Per-time Gaussian over positions.
class ProbTrajectory {
public:
    ProbTrajectory() = default;
    ProbTrajectory(std::vector<double> times, Mat means, std::vector<Mat> covariances);

    std::size_t size() const { return times_.size(); }
    Eigen::Index dims() const { return means_.cols(); }
    const std::vector<double>& times() const { return times_; }
    const Mat& means() const { return means_; }
    const std::vector<Mat>& covariances() const { return covs_; }

    Vec mean(std::size_t i) const { return means_.row(static_cast<Eigen::Index>(i)).transpose(); }
    const Mat& covariance(std::size_t i) const { return covs_[i]; }

    Vec mean_at(double t) const;
    Mat covariance_at(double t) const;

    /// Means as a trajectory; requires uniform times starting at 0.
    TimedTrajectory mean_trajectory() const;

private:
    std::vector<double> times_;
    Mat means_;
    std::vector<Mat> covs_;
};

struct ViaPoint {
    double time = 0.0;
    Vec mean;
    Mat covariance;
};

struct ForceEvent {
    double time = 0.0;
    Vec force;
};

/// Diagonal Cartesian stiffness/damping pair.
struct RobotImpedance {
    Mat stiffness;
    Mat damping;
    bool zero_impedance = false;

    static RobotImpedance diagonal(const Vec& stiffness, const Vec& damping);
    static RobotImpedance zero(Eigen::Index dims);
    void validate() const;
};

// Hadamard: (x_e - mu_w) * u per axis. MagnitudeHadamard: |x_e - mu_w| * u per
// axis. NormDirection: |x_e - mu_w| u.
enum class ViaProduct { Hadamard, MagnitudeHadamard, NormDirection };
enum class VariancePrefactor { Extended, Reference };
enum class ForceStatistic { Mean, Rms, Peak };

struct SessionConfig {
    Eigen::Index dims = 2;
    std::size_t waypoints = 200;
    std::size_t components = 10;
    std::size_t iterations = 10;
    std::size_t episodes = 5;
    double duration = 10.0;
    double lambda_mean = 1.0;
    double lambda_cov = 60.0;
    double kernel_rho = 2.0;        // 1/s^2
    double via_time_shift = 0.05;   // s
    double deformation_scale = 1.0;
    double force_threshold = 10.0;  // N
    RobotImpedance patient_robot = RobotImpedance::diagonal(Vec::Constant(2, 200.0), Vec::Constant(2, 10.0));
    RobotImpedance therapist_robot = RobotImpedance::diagonal(Vec::Constant(2, 800.0), Vec::Constant(2, 51.0));
    std::uint64_t seed = 0;

    double dt_sim = 1e-3;
    double segment_min_gap = 0.2;
    ViaProduct via_product = ViaProduct::Hadamard;
    VariancePrefactor variance_prefactor = VariancePrefactor::Extended;
    // Multiplies the preference covariance attached to therapist via-points.
    double via_cov_scale = 1.0;
    std::size_t pls_latent = 5;
    ForceStatistic force_statistic = ForceStatistic::Mean;
    // Number of past iterations whose episodes feed the preference model.
    std::size_t preference_pool = 1;
    double sensor_noise = 0.0;  // m, std of position measurement noise; 0 = off

    void validate() const;
};

/// t_n = n * duration / (n_samples - 1), n = 0..n_samples-1.
std::vector<double> uniform_times(std::size_t n_samples, double duration);

/// One-sided differences at the ends, central differences inside.
Mat central_differences(const Mat& positions, double dt);

/// Linear resampling onto n_samples uniform times over [0, duration].
TimedTrajectory resample(const TimedTrajectory& traj, std::size_t n_samples, double duration);

}  // namespace aan
