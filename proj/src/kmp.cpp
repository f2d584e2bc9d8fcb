#include "aan/kmp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aan/format.hpp"
#include "aan/gmm.hpp"

namespace aan {

namespace {

struct Entry {
    double time;
    Vec mean;
    Mat cov;
};

std::string condition_estimate(const Mat& m) {
    const Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    const Vec ev = es.eigenvalues().cwiseAbs();
    const double lo = ev.minCoeff();
    if (lo == 0.0) {
        return "inf";
    }
    return format_double(ev.maxCoeff() / lo);
}

Eigen::LLT<Mat> factorize(const Mat& m, const char* what) {
    Eigen::LLT<Mat> llt(m);
    if (llt.info() != Eigen::Success) {
        fail(ErrorKind::IllConditioned,
             std::string("factorization of ") + what + " failed (condition estimate " + condition_estimate(m) + ")");
    }
    return llt;
}

}  // namespace

double KmpModel::variance_count() const {
    return static_cast<double>(params_.prefactor == VariancePrefactor::Extended ? times_.size() : reference_size_);
}

KmpModel kmp_fit(const ProbTrajectory& ref, std::span<const ViaPoint> vias, const KmpParams& params) {
    require(ref.size() >= 2, ErrorKind::InvalidArgument, "reference needs at least two points");
    require(params.lambda_mean > 0.0 && params.lambda_cov > 0.0 && params.rho > 0.0, ErrorKind::InvalidArgument,
            "KMP regularizers and kernel width must be > 0");
    const auto d = ref.dims();
    const double t0 = ref.times().front();
    const double t1 = ref.times().back();
    const std::size_t n_ref = ref.size();
    const double tol = (t1 - t0) / (2.0 * static_cast<double>(n_ref));

    std::vector<Entry> entries;
    entries.reserve(n_ref + vias.size());
    for (std::size_t i = 0; i < n_ref; ++i) {
        entries.push_back({ref.times()[i], ref.mean(i), ref.covariance(i)});
    }

    KmpModel model;
    for (const auto& v : vias) {
        require(v.mean.size() == d && v.covariance.rows() == d && v.covariance.cols() == d, ErrorKind::Dimension,
                "via-point dimension mismatch");
        require(std::isfinite(v.time) && v.time >= t0 - 1e-12 && v.time <= t1 + 1e-12, ErrorKind::OutOfRange,
                "via-point time " + format_double(v.time) + " s outside the reference span");
        const auto& grid = ref.times();
        const auto it = std::lower_bound(grid.begin(), grid.end(), v.time);
        std::size_t nearest = static_cast<std::size_t>(it - grid.begin());
        if (nearest == grid.size() || (nearest > 0 && v.time - grid[nearest - 1] < grid[nearest] - v.time)) {
            nearest = nearest == 0 ? 0 : nearest - 1;
        }
        if (std::abs(v.time - grid[nearest]) < tol) {
            entries[nearest] = {grid[nearest], v.mean, v.covariance};
            ++model.replaced_;
        } else {
            entries.push_back({v.time, v.mean, v.covariance});
            ++model.appended_;
        }
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.time < b.time; });

    const std::size_t n = entries.size();
    const auto nd = static_cast<Eigen::Index>(n) * d;
    Mat h = Mat::Zero(nd, nd);
    Mat sigma = Mat::Zero(nd, nd);
    Vec mu(nd);
    model.means_.resize(static_cast<Eigen::Index>(n), d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto bi = static_cast<Eigen::Index>(i) * d;
        for (std::size_t j = 0; j < n; ++j) {
            const double k = kmp_kernel(entries[i].time, entries[j].time, params.rho);
            const auto bj = static_cast<Eigen::Index>(j) * d;
            for (Eigen::Index a = 0; a < d; ++a) {
                h(bi + a, bj + a) = k;
            }
        }
        Mat c = 0.5 * (entries[i].cov + entries[i].cov.transpose());
        require(c.allFinite() && entries[i].mean.allFinite(), ErrorKind::InvalidArgument,
                "non-finite reference entry at t = " + format_double(entries[i].time));
        c.diagonal().array() += kKmpJitter;
        sigma.block(bi, bi, d, d) = c;
        mu.segment(bi, d) = entries[i].mean;
        model.times_.push_back(entries[i].time);
        model.means_.row(static_cast<Eigen::Index>(i)) = entries[i].mean.transpose();
        model.covs_.push_back(std::move(c));
    }

    const auto mean_llt = factorize(h + params.lambda_mean * sigma, "H + lambda_mean Sigma");
    model.alpha_ = mean_llt.solve(mu);
    model.cov_llt_ = factorize(h + params.lambda_cov * sigma, "H + lambda_cov Sigma");
    model.params_ = params;
    model.reference_size_ = n_ref;
    return model;
}

ProbTrajectory kmp_predict(const KmpModel& model, std::span<const double> times) {
    const auto d = model.dims();
    const std::size_t n = model.size();
    const auto nd = static_cast<Eigen::Index>(n) * d;
    const auto nq = static_cast<Eigen::Index>(times.size());
    const double scale = model.variance_count() / model.params_.lambda_cov;
    Mat means(nq, d);
    std::vector<Mat> covs;
    covs.reserve(times.size());
    Mat kstar(nd, d);
    for (Eigen::Index q = 0; q < nq; ++q) {
        const double t = times[static_cast<std::size_t>(q)];
        require(std::isfinite(t), ErrorKind::InvalidArgument, "query time is not finite");
        kstar.setZero();
        for (std::size_t j = 0; j < n; ++j) {
            const double k = kmp_kernel(t, model.times_[j], model.params_.rho);
            const auto bj = static_cast<Eigen::Index>(j) * d;
            for (Eigen::Index a = 0; a < d; ++a) {
                kstar(bj + a, a) = k;
            }
        }
        means.row(q) = (kstar.transpose() * model.alpha_).transpose();
        const double kss = kmp_kernel(t, t, model.params_.rho);
        Mat cov = Mat::Identity(d, d) * kss - kstar.transpose() * model.cov_llt_.solve(kstar);
        covs.push_back(clamp_psd(scale * cov));
    }
    return ProbTrajectory(std::vector<double>(times.begin(), times.end()), std::move(means), std::move(covs));
}

std::vector<ViaPoint> boundary_via_points(const TimedTrajectory& desired, double duration) {
    require(!desired.empty(), ErrorKind::InvalidArgument, "desired motion is empty");
    require(desired.duration() >= duration - 1e-9, ErrorKind::OutOfRange,
            "desired motion does not span the episode duration");
    const auto d = desired.dims();
    const Mat cov = Mat::Identity(d, d) * kBoundaryVariance;
    return {ViaPoint{0.0, desired.position_at(0.0), cov}, ViaPoint{duration, desired.position_at(duration), cov}};
}

KmpParams kmp_params(const SessionConfig& cfg) {
    return KmpParams{cfg.lambda_mean, cfg.lambda_cov, cfg.kernel_rho, cfg.variance_prefactor};
}

TimedTrajectory deform_reference(const ProbTrajectory& pref, std::span<const ViaPoint> vias,
                                 const TimedTrajectory& desired, const SessionConfig& cfg) {
    require(pref.size() == cfg.waypoints, ErrorKind::Dimension,
            "preference has " + std::to_string(pref.size()) + " waypoints, expected " +
                std::to_string(cfg.waypoints));
    std::vector<ViaPoint> all(vias.begin(), vias.end());
    for (auto& b : boundary_via_points(desired, cfg.duration)) {
        all.push_back(std::move(b));
    }
    const KmpModel model = kmp_fit(pref, all, kmp_params(cfg));
    const auto grid = uniform_times(cfg.waypoints, cfg.duration);
    const ProbTrajectory out = kmp_predict(model, grid);
    const double dt = cfg.duration / static_cast<double>(cfg.waypoints - 1);
    return TimedTrajectory(dt, out.means(), central_differences(out.means(), dt));
}

}  // namespace aan
