#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Cholesky>

#include "aan/core.hpp"

namespace aan {

struct KmpParams {
    double lambda_mean = 1.0;
    double lambda_cov = 60.0;
    double rho = 2.0;  // 1/s^2
    VariancePrefactor prefactor = VariancePrefactor::Extended;
};

inline constexpr double kKmpJitter = 1e-8;
inline constexpr double kBoundaryVariance = 1e-6;

/// exp(-rho (a - b)^2)
inline double kmp_kernel(double a, double b, double rho) {
    const double d = a - b;
    return std::exp(-rho * d * d);
}

/// Fitted model over the extended dataset. Immutable once built.
class KmpModel {
public:
    const std::vector<double>& times() const { return times_; }
    const Mat& means() const { return means_; }
    const std::vector<Mat>& covariances() const { return covs_; }
    const KmpParams& params() const { return params_; }
    std::size_t size() const { return times_.size(); }
    Eigen::Index dims() const { return means_.cols(); }
    std::size_t reference_size() const { return reference_size_; }
    std::size_t replaced() const { return replaced_; }
    std::size_t appended() const { return appended_; }

    /// N_U or N depending on the configured prefactor.
    double variance_count() const;

private:
    friend KmpModel kmp_fit(const ProbTrajectory&, std::span<const ViaPoint>, const KmpParams&);
    friend ProbTrajectory kmp_predict(const KmpModel&, std::span<const double>);

    std::vector<double> times_;
    Mat means_;
    std::vector<Mat> covs_;
    KmpParams params_;
    std::size_t reference_size_ = 0;
    std::size_t replaced_ = 0;
    std::size_t appended_ = 0;
    Vec alpha_;                // (H + lambda_mean Sigma)^-1 mu
    Eigen::LLT<Mat> cov_llt_;  // H + lambda_cov Sigma
};

/// Merge via-points into the reference (replace within half a grid step, else
/// append) and factorize both regularized kernel systems.
KmpModel kmp_fit(const ProbTrajectory& ref, std::span<const ViaPoint> vias, const KmpParams& params);

ProbTrajectory kmp_predict(const KmpModel& model, std::span<const double> times);

/// Start and end of the desired motion as tight constraints.
std::vector<ViaPoint> boundary_via_points(const TimedTrajectory& desired, double duration);

KmpParams kmp_params(const SessionConfig& cfg);

/// Next reference: KMP over pref plus vias plus boundary points, mean sampled
/// on the N-point grid.
TimedTrajectory deform_reference(const ProbTrajectory& pref, std::span<const ViaPoint> vias,
                                 const TimedTrajectory& desired, const SessionConfig& cfg);

}  // namespace aan
