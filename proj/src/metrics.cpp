#include "aan/metrics.hpp"

#include <cmath>
#include <complex>

#include <unsupported/Eigen/FFT>

namespace aan {

double corrective_force_metric(const EpisodeLog& log, ForceStatistic stat) {
    require(log.control_forces.rows() > 0, ErrorKind::InvalidArgument, "empty episode log");
    const Vec norms = log.control_forces.rowwise().norm();
    switch (stat) {
        case ForceStatistic::Mean:
            return norms.mean();
        case ForceStatistic::Rms:
            return std::sqrt(norms.squaredNorm() / static_cast<double>(norms.size()));
        case ForceStatistic::Peak:
            return norms.maxCoeff();
    }
    return 0.0;
}

double corrective_force_metric(std::span<const EpisodeLog> logs, ForceStatistic stat) {
    require(!logs.empty(), ErrorKind::InvalidArgument, "no episodes");
    double sum = 0.0;
    for (const auto& l : logs) {
        sum += corrective_force_metric(l, stat);
    }
    return sum / static_cast<double>(logs.size());
}

double sparc(std::span<const double> speed, double dt, const SparcOptions& opt) {
    require(speed.size() >= 16, ErrorKind::InvalidArgument, "SPARC needs at least 16 samples");
    require(std::isfinite(dt) && dt > 0.0, ErrorKind::InvalidArgument, "SPARC needs dt > 0");
    bool nonzero = false;
    for (double s : speed) {
        require(std::isfinite(s), ErrorKind::InvalidArgument, "non-finite speed sample");
        nonzero = nonzero || s != 0.0;
    }
    require(nonzero, ErrorKind::InvalidArgument, "SPARC is undefined for an all-zero speed profile");

    std::size_t nfft = 1;
    while (nfft < static_cast<std::size_t>(opt.padding_factor) * speed.size()) {
        nfft <<= 1;
    }
    std::vector<double> padded(nfft, 0.0);
    std::copy(speed.begin(), speed.end(), padded.begin());
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, padded);

    const double df = 1.0 / (dt * static_cast<double>(nfft));
    const double dc = std::abs(spectrum[0]);
    require(dc > 0.0, ErrorKind::InvalidArgument, "SPARC is undefined for a zero-mean speed profile");
    const auto last = std::min<std::size_t>(nfft / 2, static_cast<std::size_t>(std::floor(opt.cutoff_hz / df)));
    std::vector<double> mag(last + 1);
    std::size_t cut = 0;
    for (std::size_t k = 0; k <= last; ++k) {
        mag[k] = std::abs(spectrum[k]) / dc;
        if (mag[k] >= opt.amplitude_threshold) {
            cut = k;
        }
    }
    cut = std::max<std::size_t>(cut, 1);
    const double fc = static_cast<double>(cut) * df;
    double arc = 0.0;
    for (std::size_t k = 1; k <= cut; ++k) {
        const double dw = df / fc;
        const double dv = mag[k] - mag[k - 1];
        arc += std::sqrt(dw * dw + dv * dv);
    }
    return -arc;
}

std::vector<double> speed_profile(const TimedTrajectory& traj) {
    require(traj.size() >= 2, ErrorKind::InvalidArgument, "speed profile needs at least two samples");
    const Mat v = central_differences(traj.positions(), traj.dt());
    std::vector<double> out(static_cast<std::size_t>(v.rows()));
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = v.row(i).norm();
    }
    return out;
}

double episode_sparc(const EpisodeLog& log) {
    const auto s = speed_profile(log.actual);
    return sparc(s, log.actual.dt());
}

double mean_sparc(std::span<const EpisodeLog> logs) {
    require(!logs.empty(), ErrorKind::InvalidArgument, "no episodes");
    double sum = 0.0;
    for (const auto& l : logs) {
        sum += episode_sparc(l);
    }
    return sum / static_cast<double>(logs.size());
}

double keypoint_error(const TimedTrajectory& actual, const TimedTrajectory& desired,
                      std::span<const double> keypoints) {
    require(!keypoints.empty(), ErrorKind::InvalidArgument, "no keypoints");
    double sq = 0.0;
    for (double t : keypoints) {
        sq += (desired.position_at(t) - actual.position_at(t)).squaredNorm();
    }
    return std::sqrt(sq / static_cast<double>(keypoints.size()));
}

double keypoint_rms(std::span<const EpisodeLog> logs, const TimedTrajectory& desired,
                    std::span<const double> keypoints) {
    require(!logs.empty(), ErrorKind::InvalidArgument, "no episodes");
    double sq = 0.0;
    for (const auto& l : logs) {
        const double e = keypoint_error(l.actual, desired, keypoints);
        sq += e * e;
    }
    return std::sqrt(sq / static_cast<double>(logs.size()));
}

double tracking_rms(std::span<const EpisodeLog> logs, const TimedTrajectory& desired) {
    require(!logs.empty(), ErrorKind::InvalidArgument, "no episodes");
    double sq = 0.0;
    std::size_t count = 0;
    for (const auto& l : logs) {
        for (std::size_t k = 0; k < l.actual.size(); ++k) {
            sq += (desired.position_at(l.actual.time(k)) - l.actual.position(k)).squaredNorm();
            ++count;
        }
    }
    return std::sqrt(sq / static_cast<double>(count));
}

}  // namespace aan
