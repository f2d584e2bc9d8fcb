#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aan/core.hpp"

namespace aan {

/// Joint mixture over (t, x): dimension 0 of every mean/covariance is time.
struct GmmModel {
    std::vector<double> weights;
    std::vector<Vec> means;
    std::vector<Mat> covariances;
    double input_min = 0.0;  // time span of the training data
    double input_max = 0.0;

    std::size_t components() const { return weights.size(); }
    Eigen::Index dims() const { return means.empty() ? 0 : means.front().size(); }
    void validate() const;
};

struct GmmFitReport {
    std::vector<double> log_likelihood;  // one entry per EM iteration
    std::size_t iterations = 0;
    std::size_t reseeds = 0;
    bool converged = false;
};

inline constexpr double kGmmRegularization = 1e-6;
inline constexpr double kGmmRelativeTolerance = 1e-6;
inline constexpr std::size_t kGmmMaxIterations = 200;

/// EM with k-means++ seeding. Rows of `data` are samples; column 0 is time.
GmmModel fit_gmm(const Mat& data, std::size_t components, std::uint64_t seed, GmmFitReport* report = nullptr);

double gmm_log_likelihood(const GmmModel& model, const Mat& data);

struct GmrDiagnostics {
    std::vector<Vec> responsibilities;  // per query time
    std::vector<bool> extrapolated;     // query outside the training time span
};

/// Gaussian mixture regression of position on time.
ProbTrajectory gmr_condition(const GmmModel& model, std::span<const double> times, GmrDiagnostics* diag = nullptr);

/// Symmetrize and clamp negative eigenvalues to zero.
Mat clamp_psd(const Mat& m);

}  // namespace aan
