#include "aan/policy.hpp"
#include "aan/viapoint.hpp"
#include "helpers.hpp"

using namespace aan;
using aan::test::v2;

namespace {

std::vector<ForceEvent> pulse(double t0, double t1, const Vec& f, double dt = 0.001) {
    std::vector<ForceEvent> out;
    const auto n = static_cast<int>(std::llround((t1 - t0) / dt));
    for (int k = 0; k <= n; ++k) {
        out.push_back({t0 + dt * k, f});
    }
    return out;
}

TimedTrajectory constant_path(const Vec& p, double duration = 10.0, double dt = 0.01) {
    const auto n = static_cast<Eigen::Index>(std::llround(duration / dt)) + 1;
    Mat pos(n, 2);
    pos.rowwise() = p.transpose();
    return TimedTrajectory(dt, pos);
}

ProbTrajectory constant_pref(const Vec& p, double var = 1e-4) {
    const auto times = uniform_times(200, 10.0);
    Mat m(200, 2);
    m.rowwise() = p.transpose();
    return ProbTrajectory(times, m, std::vector<Mat>(200, var * Mat::Identity(2, 2)));
}

}  // namespace

TEST_CASE("segment detection examples") {
    std::vector<ForceEvent> weak;
    for (int k = 0; k < 100; ++k) {
        weak.push_back({0.1 * k, v2(8.0 * std::cos(k), 8.0 * std::sin(k))});
    }
    CHECK(detect_segments(weak, 10.0, 0.2).empty());

    const auto one = detect_segments(pulse(2.0, 2.1, v2(15, 0)), 10.0, 0.2);
    REQUIRE(one.size() == 1);
    CHECK(one[0].t_start == 2.0);
    CHECK(one[0].t_end == doctest::Approx(2.1));
    CHECK(one[0].peak_force == v2(15, 0));

    auto two = pulse(2.0, 2.01, v2(15, 0));
    const auto second = pulse(2.05, 2.06, v2(0, 12));
    two.insert(two.end(), second.begin(), second.end());
    const auto merged = detect_segments(two, 10.0, 0.2);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].t_start == 2.0);
    CHECK(merged[0].peak_force == v2(15, 0));

    const auto apart = detect_segments(two, 10.0, 0.02);
    CHECK(apart.size() == 2);
}

TEST_CASE("segment peak picks the largest magnitude") {
    std::vector<ForceEvent> ev{{1.0, v2(11, 0)}, {1.001, v2(0, -14)}, {1.002, v2(12, 0)}};
    const auto s = detect_segments(ev, 10.0, 0.2);
    REQUIRE(s.size() == 1);
    CHECK(s[0].peak_force == v2(0, -14));
}

TEST_CASE("sub-threshold gaps split runs when no merge gap is set") {
    std::vector<ForceEvent> ev{{1.0, v2(11, 0)}, {1.001, v2(5, 0)}, {1.002, v2(12, 0)}};
    CHECK(detect_segments(ev, 10.0, 0.0).size() == 2);
    CHECK(detect_segments(ev, 10.0, 0.2).size() == 1);
}

TEST_CASE("unsorted events are an ordering error") {
    std::vector<ForceEvent> ev{{2.0, v2(15, 0)}, {1.0, v2(15, 0)}};
    CHECK_THROWS_KIND(detect_segments(ev, 10.0, 0.2), ErrorKind::Ordering);
}

TEST_CASE("via mean examples") {
    const Vec xr = v2(0.3, 0.1);
    // deviation (0.1, 0.04), push along x
    const Vec m = via_mean(v2(0.5, 0.14), v2(0.4, 0.10), xr, v2(15, 0), 1.0, ViaProduct::Hadamard);
    CHECK((m - (xr + v2(0.1, 0))).norm() <= 1e-15);
    CHECK(via_mean(v2(0.5, 0.14), v2(0.4, 0.10), xr, v2(15, 0), 0.0, ViaProduct::Hadamard) == xr);
    CHECK(via_mean(v2(0.4, 0.1), v2(0.4, 0.1), xr, v2(3, -7), 1.0, ViaProduct::Hadamard) == xr);

    // The variants agree with Hadamard when deviation and push share signs.
    const Vec mh = via_mean(v2(0.5, 0.14), v2(0.4, 0.10), xr, v2(15, 0), 1.0, ViaProduct::MagnitudeHadamard);
    CHECK(mh == m);
    const Vec nd = via_mean(v2(0.5, 0.14), v2(0.4, 0.10), xr, v2(15, 0), 1.0, ViaProduct::NormDirection);
    CHECK((nd - (xr + v2(std::hypot(0.1, 0.04), 0))).norm() <= 1e-15);

    // Opposite signs: Hadamard flips the push, the magnitude form keeps it.
    const Vec flip = via_mean(v2(0.3, 0.1), v2(0.4, 0.1), xr, v2(-15, 0), 1.0, ViaProduct::Hadamard);
    const Vec keep = via_mean(v2(0.3, 0.1), v2(0.4, 0.1), xr, v2(-15, 0), 1.0, ViaProduct::MagnitudeHadamard);
    CHECK(flip[0] > xr[0]);
    CHECK(keep[0] < xr[0]);
    CHECK_THROWS_KIND(via_mean(xr, xr, xr, v2(0, 0), 1.0, ViaProduct::Hadamard), ErrorKind::InvalidArgument);
}

TEST_CASE("derived via-points use the shifted time and preference covariance") {
    SessionConfig cfg;
    const auto desired = constant_path(v2(0.5, 0.14));
    const auto reference = constant_path(v2(0.3, 0.1));
    const auto pref = constant_pref(v2(0.4, 0.1), 2e-4);
    const auto segs = detect_segments(pulse(2.0, 2.1, v2(15, 0)), cfg.force_threshold, cfg.segment_min_gap);
    const auto out = derive_via_points(segs, desired, reference, pref, cfg);
    REQUIRE(out.vias.size() == 1);
    CHECK(out.vias[0].time == doctest::Approx(2.05).epsilon(1e-15));
    CHECK((out.vias[0].mean - v2(0.4, 0.1)).norm() <= 1e-15);
    CHECK(out.vias[0].covariance.isApprox(2e-4 * Mat::Identity(2, 2)));

    cfg.via_cov_scale = 0.1;
    const auto scaled = derive_via_points(segs, desired, reference, pref, cfg);
    CHECK(scaled.vias[0].covariance.isApprox(2e-5 * Mat::Identity(2, 2)));
}

TEST_CASE("late segments are dropped with a record") {
    SessionConfig cfg;
    const auto path = constant_path(v2(0.4, 0.0));
    const auto pref = constant_pref(v2(0.4, 0.0));
    const std::vector<ForceSegment> segs{{9.98, 9.99, v2(15, 0)}, {4.0, 4.1, v2(15, 0)}};
    const auto out = derive_via_points(segs, path, path, pref, cfg);
    CHECK(out.vias.size() == 1);
    REQUIRE(out.dropped.size() == 1);
    CHECK(out.dropped[0].via_time == doctest::Approx(10.03));
    CHECK(out.dropped[0].reason.find("outside") != std::string::npos);
    for (const auto& v : out.vias) {
        CHECK(v.time > 0.0);
        CHECK(v.time <= cfg.duration);
    }
}

TEST_CASE("zero scale or zero deviation gives the reference") {
    SessionConfig cfg;
    const Task task = triangle_task(cfg);
    const auto reference = constant_path(v2(0.41, -0.02));
    const auto pref = constant_pref(v2(0.33, 0.07));
    const std::vector<ForceSegment> segs{{1.0, 1.1, v2(15, 3)}, {4.2, 4.3, v2(-2, 14)}, {7.7, 7.8, v2(-9, -9)}};
    cfg.deformation_scale = 0.0;
    for (const auto& v : derive_via_points(segs, task.desired, reference, pref, cfg).vias) {
        CHECK(v.mean == reference.position_at(v.time));
    }
    cfg.deformation_scale = 1.0;
    // Preference equal to x_e at every shifted time.
    const auto times = uniform_times(200, 10.0);
    Mat on(200, 2);
    for (std::size_t i = 0; i < 200; ++i) {
        on.row(static_cast<Eigen::Index>(i)) = task.desired.position_at(times[i]).transpose();
    }
    std::vector<ForceSegment> grid_segs;
    for (std::size_t i : {20, 90, 150}) {
        const double t = times[i] - cfg.via_time_shift;
        grid_segs.push_back({t, t + 0.1, v2(12, -5)});
    }
    const ProbTrajectory on_target(times, on, std::vector<Mat>(200, 1e-4 * Mat::Identity(2, 2)));
    for (auto product : {ViaProduct::Hadamard, ViaProduct::MagnitudeHadamard, ViaProduct::NormDirection}) {
        cfg.via_product = product;
        const auto vias = derive_via_points(grid_segs, task.desired, reference, on_target, cfg).vias;
        REQUIRE(vias.size() == 3);
        for (const auto& v : vias) {
            CHECK((v.mean - reference.position_at(v.time)).norm() <= 1e-15);
        }
    }
}

TEST_CASE("rescaling the forces leaves segments and via-points unchanged") {
    SessionConfig cfg;
    const Task task = triangle_task(cfg);
    const auto reference = constant_path(v2(0.41, -0.02));
    const auto pref = constant_pref(v2(0.33, 0.07));
    std::vector<ForceEvent> ev = pulse(1.0, 1.1, v2(12, 5));
    const auto more = pulse(6.0, 6.1, v2(-3, -14));
    ev.insert(ev.end(), more.begin(), more.end());
    const auto base_segs = detect_segments(ev, cfg.force_threshold, cfg.segment_min_gap);
    const auto base = derive_via_points(base_segs, task.desired, reference, pref, cfg).vias;
    REQUIRE(base.size() == 2);
    for (double c : {2.0, 4.0, 1.1, 1.7, 3.14159, 25.0}) {
        auto scaled = ev;
        for (auto& e : scaled) {
            e.force *= c;
        }
        const auto segs = detect_segments(scaled, cfg.force_threshold, cfg.segment_min_gap);
        REQUIRE(segs.size() == base_segs.size());
        for (std::size_t i = 0; i < segs.size(); ++i) {
            CHECK(segs[i].t_start == base_segs[i].t_start);
            CHECK(segs[i].t_end == base_segs[i].t_end);
        }
        const auto vias = derive_via_points(segs, task.desired, reference, pref, cfg).vias;
        for (std::size_t i = 0; i < vias.size(); ++i) {
            CHECK(vias[i].time == base[i].time);
            CHECK(vias[i].covariance == base[i].covariance);
            if (c == 2.0 || c == 4.0) {
                CHECK(vias[i].mean == base[i].mean);  // power-of-two scaling is exact
            } else {
                CHECK((vias[i].mean - base[i].mean).cwiseAbs().maxCoeff() <= 1e-15);
            }
        }
    }
}

TEST_CASE("via budget is N/10") {
    SessionConfig cfg;
    CHECK_NOTHROW(check_via_budget(20, cfg));
    CHECK_THROWS_KIND(check_via_budget(21, cfg), ErrorKind::Config);
}
