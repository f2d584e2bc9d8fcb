#include "aan/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aan/format.hpp"
#include "aan/random.hpp"

namespace aan {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_sum_exp(const Vec& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) {
        return m;
    }
    return m + std::log((v.array() - m).exp().sum());
}

// Per-component Cholesky factor and log-determinant, reused over all samples.
struct Gaussian {
    Vec mean;
    Eigen::LLT<Mat> llt;
    double log_norm = 0.0;  // -0.5 (d log 2pi + log det)

    Gaussian(const Vec& mu, const Mat& cov) : mean(mu), llt(cov) {
        if (llt.info() != Eigen::Success) {
            fail(ErrorKind::Degenerate, "component covariance is not positive definite");
        }
        const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        log_norm = -0.5 * (static_cast<double>(mu.size()) * kLog2Pi + log_det);
    }

    double log_pdf(const Vec& x) const {
        const Vec z = llt.matrixL().solve(x - mean);
        return log_norm - 0.5 * z.squaredNorm();
    }
};

// Log joint p(c, x_i) for every sample and component.
Mat log_joint(const GmmModel& m, const Mat& data) {
    const auto n = data.rows();
    const auto c = static_cast<Eigen::Index>(m.components());
    Mat out(n, c);
    for (Eigen::Index k = 0; k < c; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        const Gaussian g(m.means[idx], m.covariances[idx]);
        const double lw = std::log(m.weights[idx]);
        for (Eigen::Index i = 0; i < n; ++i) {
            out(i, k) = lw + g.log_pdf(data.row(i).transpose());
        }
    }
    return out;
}

Mat weighted_covariance(const Mat& data, const Vec& w, const Vec& mean, double total) {
    const Mat centered = data.rowwise() - mean.transpose();
    Mat cov = (centered.array().colwise() * w.array()).matrix().transpose() * centered / total;
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += kGmmRegularization;
    return cov;
}

std::vector<Eigen::Index> kmeans_pp_centers(const Mat& data, std::size_t c, Rng& rng) {
    const auto n = data.rows();
    std::vector<Eigen::Index> centers;
    centers.push_back(static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(n)));
    Vec d2 = (data.rowwise() - data.row(centers[0])).rowwise().squaredNorm();
    while (centers.size() < c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng.next() % static_cast<std::uint64_t>(n));
        } else {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > r) {
                    pick = i;
                    break;
                }
            }
        }
        centers.push_back(pick);
        d2 = d2.cwiseMin((data.rowwise() - data.row(pick)).rowwise().squaredNorm());
    }
    return centers;
}

GmmModel kmeans_init(const Mat& data, std::size_t c, Rng& rng) {
    const auto n = data.rows();
    const auto d = data.cols();
    const auto ci = static_cast<Eigen::Index>(c);
    Mat centers(ci, d);
    const auto seeds = kmeans_pp_centers(data, c, rng);
    for (Eigen::Index k = 0; k < ci; ++k) {
        centers.row(k) = data.row(seeds[static_cast<std::size_t>(k)]);
    }
    std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < 50; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            (centers.rowwise() - data.row(i)).rowwise().squaredNorm().minCoeff(&best);
            if (assign[static_cast<std::size_t>(i)] != best) {
                assign[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        Mat sums = Mat::Zero(ci, d);
        Vec counts = Vec::Zero(ci);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += data.row(i);
            counts[assign[static_cast<std::size_t>(i)]] += 1.0;
        }
        for (Eigen::Index k = 0; k < ci; ++k) {
            if (counts[k] > 0.0) {
                centers.row(k) = sums.row(k) / counts[k];
            }
        }
    }

    GmmModel m;
    for (Eigen::Index k = 0; k < ci; ++k) {
        Vec w = Vec::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (assign[static_cast<std::size_t>(i)] == k) {
                w[i] = 1.0;
            }
        }
        const double count = w.sum();
        const Vec mean = centers.row(k).transpose();
        m.means.push_back(mean);
        if (count > 0.0) {
            m.weights.push_back(count / static_cast<double>(n));
            m.covariances.push_back(weighted_covariance(data, w, mean, count));
        } else {
            m.weights.push_back(1.0 / static_cast<double>(n));
            m.covariances.push_back(Mat::Identity(d, d) * kGmmRegularization);
        }
    }
    const double total = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
    for (auto& w : m.weights) {
        w /= total;
    }
    return m;
}

}  // namespace

void GmmModel::validate() const {
    require(!weights.empty(), ErrorKind::InvalidArgument, "mixture has no components");
    require(means.size() == weights.size() && covariances.size() == weights.size(), ErrorKind::Dimension,
            "mixture component arrays differ in length");
    const auto d = dims();
    require(d >= 2, ErrorKind::Dimension, "mixture needs time plus at least one output dimension");
    double total = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        require(std::isfinite(weights[k]) && weights[k] >= 0.0, ErrorKind::InvalidArgument, "invalid mixture weight");
        require(means[k].size() == d && covariances[k].rows() == d && covariances[k].cols() == d,
                ErrorKind::Dimension, "component dimension mismatch");
        total += weights[k];
    }
    require(std::abs(total - 1.0) < 1e-9, ErrorKind::InvalidArgument, "mixture weights must sum to 1");
}

GmmModel fit_gmm(const Mat& data, std::size_t components, std::uint64_t seed, GmmFitReport* report) {
    require(components >= 1, ErrorKind::InvalidArgument, "need at least one component");
    require(data.cols() >= 2, ErrorKind::Dimension, "data needs a time column and at least one output column");
    require(data.allFinite(), ErrorKind::InvalidArgument, "data contains non-finite values");
    const auto n = data.rows();
    const auto d_out = data.cols() - 1;
    const auto needed = static_cast<Eigen::Index>(components) * (d_out + 2);
    require(n >= needed, ErrorKind::InsufficientData,
            "need at least " + std::to_string(needed) + " samples for " + std::to_string(components) +
                " components, got " + std::to_string(n));

    Rng rng(seed);
    GmmModel model = kmeans_init(data, components, rng);
    model.input_min = data.col(0).minCoeff();
    model.input_max = data.col(0).maxCoeff();

    GmmFitReport rep;
    const auto c = static_cast<Eigen::Index>(components);
    const double floor = 1e-8 * static_cast<double>(n);
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < kGmmMaxIterations; ++iter) {
        const Mat lj = log_joint(model, data);
        Vec lse(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            lse[i] = log_sum_exp(lj.row(i).transpose());
        }
        const double ll = lse.sum();
        require(std::isfinite(ll), ErrorKind::Degenerate, "log-likelihood is not finite");
        rep.log_likelihood.push_back(ll);
        rep.iterations = iter + 1;
        if (std::isfinite(prev) && std::abs(ll - prev) < kGmmRelativeTolerance * std::abs(prev)) {
            rep.converged = true;
            break;
        }
        prev = ll;

        const Mat resp = (lj.colwise() - lse).array().exp().matrix();
        GmmModel next;
        next.input_min = model.input_min;
        next.input_max = model.input_max;
        for (Eigen::Index k = 0; k < c; ++k) {
            const Vec w = resp.col(k);
            double nk = w.sum();
            Vec mean;
            Mat cov;
            if (!(nk > floor)) {
                if (rep.reseeds > 0) {
                    fail(ErrorKind::Degenerate, "component " + std::to_string(k) + " collapsed after re-seeding");
                }
                ++rep.reseeds;
                // Re-seed on the worst-explained sample with the global spread.
                Eigen::Index worst = 0;
                lse.minCoeff(&worst);
                mean = data.row(worst).transpose();
                const Vec ones = Vec::Ones(n);
                cov = weighted_covariance(data, ones, data.colwise().mean().transpose(), static_cast<double>(n)) /
                      static_cast<double>(components);
                cov.diagonal().array() += kGmmRegularization;
                nk = 1.0;
            } else {
                mean = (data.transpose() * w) / nk;
                cov = weighted_covariance(data, w, mean, nk);
            }
            next.weights.push_back(nk);
            next.means.push_back(std::move(mean));
            next.covariances.push_back(std::move(cov));
        }
        const double total = std::accumulate(next.weights.begin(), next.weights.end(), 0.0);
        for (auto& w : next.weights) {
            w /= total;
        }
        model = std::move(next);
    }
    if (report != nullptr) {
        *report = std::move(rep);
    }
    return model;
}

double gmm_log_likelihood(const GmmModel& model, const Mat& data) {
    model.validate();
    require(data.cols() == model.dims(), ErrorKind::Dimension, "data dimension does not match the mixture");
    const Mat lj = log_joint(model, data);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        ll += log_sum_exp(lj.row(i).transpose());
    }
    return ll;
}

Mat clamp_psd(const Mat& m) {
    const Mat sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    if (es.eigenvalues().minCoeff() >= 0.0) {
        return sym;
    }
    const Vec ev = es.eigenvalues().cwiseMax(0.0);
    Mat out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

ProbTrajectory gmr_condition(const GmmModel& model, std::span<const double> times, GmrDiagnostics* diag) {
    model.validate();
    const auto d = model.dims() - 1;
    const auto c = model.components();
    const auto nt = static_cast<Eigen::Index>(times.size());
    Mat means(nt, d);
    std::vector<Mat> covs;
    covs.reserve(times.size());
    if (diag != nullptr) {
        diag->responsibilities.clear();
        diag->extrapolated.clear();
    }

    std::vector<Vec> slope(c);
    std::vector<Mat> cond_cov(c);
    for (std::size_t k = 0; k < c; ++k) {
        const Mat& s = model.covariances[k];
        const double stt = s(0, 0);
        require(stt > 0.0, ErrorKind::Conditioning, "component has zero time variance");
        slope[k] = s.block(1, 0, d, 1) / stt;
        cond_cov[k] = s.block(1, 1, d, d) - slope[k] * s.block(0, 1, 1, d);
    }

    Vec logh(static_cast<Eigen::Index>(c));
    std::vector<Vec> mu_k(c);
    for (Eigen::Index i = 0; i < nt; ++i) {
        const double t = times[static_cast<std::size_t>(i)];
        require(std::isfinite(t), ErrorKind::InvalidArgument, "query time is not finite");
        for (std::size_t k = 0; k < c; ++k) {
            const double stt = model.covariances[k](0, 0);
            const double dt = t - model.means[k][0];
            logh[static_cast<Eigen::Index>(k)] =
                std::log(model.weights[k]) - 0.5 * (kLog2Pi + std::log(stt)) - 0.5 * dt * dt / stt;
            mu_k[k] = model.means[k].tail(d) + slope[k] * dt;
        }
        const double norm = log_sum_exp(logh);
        if (!std::isfinite(norm)) {
            fail(ErrorKind::Conditioning, "responsibilities vanish at t = " + format_double(t));
        }
        const Vec h = (logh.array() - norm).exp().matrix();
        Vec mean = Vec::Zero(d);
        for (std::size_t k = 0; k < c; ++k) {
            mean += h[static_cast<Eigen::Index>(k)] * mu_k[k];
        }
        Mat cov = Mat::Zero(d, d);
        for (std::size_t k = 0; k < c; ++k) {
            const Vec dev = mu_k[k] - mean;
            cov += h[static_cast<Eigen::Index>(k)] * (cond_cov[k] + dev * dev.transpose());
        }
        means.row(i) = mean.transpose();
        covs.push_back(clamp_psd(cov));
        if (diag != nullptr) {
            diag->responsibilities.push_back(h);
            diag->extrapolated.push_back(t < model.input_min || t > model.input_max);
        }
    }
    return ProbTrajectory(std::vector<double>(times.begin(), times.end()), std::move(means), std::move(covs));
}

}  // namespace aan
