#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "aan/metrics.hpp"
#include "helpers.hpp"

using namespace aan;

namespace {

EpisodeLog forces_only(const Mat& f) {
    EpisodeLog log;
    log.control_forces = f;
    return log;
}

// Minimum-jerk point-to-point speed, duration T, sampled at dt with `pad` seconds of rest either side.
std::vector<double> min_jerk_speed(double T, double dt, double amplitude = 0.1, double pad = 0.0) {
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::llround((T + 2.0 * pad) / dt)) + 1;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt - pad;
        const double s = std::clamp(t / T, 0.0, 1.0);
        out.push_back(amplitude / T * 30.0 * s * s * (1.0 - s) * (1.0 - s));
    }
    return out;
}

std::vector<double> with_ripple(std::vector<double> speed, double amp, double hz, double dt) {
    const double peak = *std::max_element(speed.begin(), speed.end());
    for (std::size_t i = 0; i < speed.size(); ++i) {
        const double t = static_cast<double>(i) * dt;
        speed[i] += amp * peak * std::sin(2.0 * std::numbers::pi * hz * t) * (speed[i] / peak);
    }
    return speed;
}

// Direct O(n^2) transform of the same definition.
double sparc_naive(const std::vector<double>& speed, double dt, const SparcOptions& opt = {}) {
    std::size_t nfft = 1;
    while (nfft < static_cast<std::size_t>(opt.padding_factor) * speed.size()) nfft <<= 1;
    const double df = 1.0 / (dt * static_cast<double>(nfft));
    const auto last = std::min<std::size_t>(nfft / 2, static_cast<std::size_t>(std::floor(opt.cutoff_hz / df)));
    std::vector<double> mag(last + 1);
    for (std::size_t k = 0; k <= last; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t i = 0; i < speed.size(); ++i) {
            acc += speed[i] * std::polar(1.0, -2.0 * std::numbers::pi * double(k) * double(i) / double(nfft));
        }
        mag[k] = std::abs(acc);
    }
    const double dc = mag[0];
    std::size_t cut = 1;
    for (std::size_t k = 0; k <= last; ++k) {
        mag[k] /= dc;
        if (mag[k] >= opt.amplitude_threshold) cut = std::max(cut, k);
    }
    double arc = 0.0;
    for (std::size_t k = 1; k <= cut; ++k) {
        arc += std::hypot(1.0 / double(cut), mag[k] - mag[k - 1]);
    }
    return -arc;
}

}  // namespace

TEST_CASE("corrective force metric examples") {
    CHECK(corrective_force_metric(forces_only(Mat::Zero(50, 2))) == 0.0);
    Mat f(4, 2);
    f.rowwise() = Eigen::RowVector2d(3.0, 4.0);
    for (auto stat : {ForceStatistic::Mean, ForceStatistic::Rms, ForceStatistic::Peak}) {
        CHECK(corrective_force_metric(forces_only(f), stat) == doctest::Approx(5.0).epsilon(1e-15));
    }
    Mat g(2, 2);
    g << 3, 4, 0, 0;
    CHECK(corrective_force_metric(forces_only(g), ForceStatistic::Mean) == 2.5);
    CHECK(corrective_force_metric(forces_only(g), ForceStatistic::Peak) == 5.0);
    CHECK(corrective_force_metric(forces_only(g), ForceStatistic::Rms) == doctest::Approx(std::sqrt(12.5)));
    CHECK_THROWS_KIND(corrective_force_metric(forces_only(Mat(0, 2))), ErrorKind::InvalidArgument);
}

TEST_CASE("corrective force metric matches a per-step recomputation and ignores order") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    std::vector<EpisodeLog> logs;
    double oracle = 0.0;
    for (int e = 0; e < 5; ++e) {
        Mat f(1001, 2);
        double sum = 0.0;
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
            f(i, 0) = n01(rng);
            f(i, 1) = n01(rng);
            sum += std::sqrt(f(i, 0) * f(i, 0) + f(i, 1) * f(i, 1));
        }
        oracle += sum / static_cast<double>(f.rows());
        logs.push_back(forces_only(f));
    }
    oracle /= 5.0;
    CHECK(corrective_force_metric(logs) == doctest::Approx(oracle).epsilon(1e-12));
    const Mat rev = logs[0].control_forces.colwise().reverse();
    CHECK(corrective_force_metric(forces_only(rev)) ==
          doctest::Approx(corrective_force_metric(logs[0])).epsilon(1e-12));
}

TEST_CASE("SPARC agrees with a direct transform") {
    const double dt = 1e-3;
    const auto mj = min_jerk_speed(1.0, dt, 0.1, 0.5);
    CHECK(std::abs(sparc(mj, dt) - sparc_naive(mj, dt)) <= 1e-9);
    const auto rip = with_ripple(mj, 0.3, 4.0, dt);
    CHECK(std::abs(sparc(rip, dt) - sparc_naive(rip, dt)) <= 1e-9);
}

TEST_CASE("SPARC is amplitude invariant") {
    const double dt = 1e-3;
    const auto a = min_jerk_speed(2.0, dt, 0.1);
    const auto b = min_jerk_speed(2.0, dt, 0.37);
    CHECK(std::abs(sparc(a, dt) - sparc(b, dt)) <= 1e-12);
    auto scaled = with_ripple(a, 0.2, 3.0, dt);
    const double base = sparc(scaled, dt);
    for (double& s : scaled) s *= 8.0;
    CHECK(std::abs(sparc(scaled, dt) - base) <= 1e-12);
}

TEST_CASE("SPARC ranks smooth above rippled and is monotone in ripple") {
    const double dt = 1e-3;
    const auto mj = min_jerk_speed(2.0, dt);
    double prev = sparc(mj, dt);
    MESSAGE("min-jerk SPARC " << prev);
    CHECK(prev > -2.0);
    CHECK(prev < -1.0);
    for (double amp : {0.25, 0.5, 0.75, 1.0}) {
        const double s = sparc(with_ripple(mj, amp, 3.0, dt), dt);
        MESSAGE("ripple " << amp << ": " << s);
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("SPARC is insensitive to duration for the same shape") {
    const double a = sparc(min_jerk_speed(1.0, 1e-3), 1e-3);
    const double b = sparc(min_jerk_speed(2.0, 1e-3), 1e-3);
    CHECK(std::abs(a - b) < 0.05);
}

TEST_CASE("SPARC rejects degenerate input") {
    CHECK_THROWS_KIND(sparc(std::vector<double>(100, 0.0), 1e-3), ErrorKind::InvalidArgument);
    CHECK_THROWS_KIND(sparc(std::vector<double>(10, 1.0), 1e-3), ErrorKind::InvalidArgument);
    CHECK_THROWS_KIND(sparc(std::vector<double>(100, 1.0), 0.0), ErrorKind::InvalidArgument);
    auto bad = min_jerk_speed(1.0, 1e-3);
    bad[3] = std::nan("");
    CHECK_THROWS_KIND(sparc(bad, 1e-3), ErrorKind::InvalidArgument);
}

TEST_CASE("speed profile and keypoint errors") {
    Mat p(5, 2);
    for (int i = 0; i < 5; ++i) p.row(i) << 0.1 * i, 0.0;
    const TimedTrajectory line(0.5, p);
    for (double s : speed_profile(line)) {
        CHECK(s == doctest::Approx(0.2));
    }
    Mat q = p;
    q.col(1).setConstant(0.03);
    const TimedTrajectory off(0.5, q);
    const std::vector<double> kp{0.5, 1.0, 1.5};
    CHECK(keypoint_error(off, line, kp) == doctest::Approx(0.03));
    EpisodeLog a, b;
    a.actual = off;
    Mat r = p;
    r.col(1).setConstant(0.04);
    b.actual = TimedTrajectory(0.5, r);
    const std::vector<EpisodeLog> both{a, b};
    CHECK(keypoint_rms(both, line, kp) == doctest::Approx(std::sqrt((0.03 * 0.03 + 0.04 * 0.04) / 2.0)));
    CHECK(tracking_rms(both, line) == doctest::Approx(std::sqrt((0.03 * 0.03 + 0.04 * 0.04) / 2.0)));
    CHECK_THROWS_KIND(keypoint_error(off, line, {}), ErrorKind::InvalidArgument);
}
