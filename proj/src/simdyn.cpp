#include "aan/simdyn.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "aan/format.hpp"
#include "aan/random.hpp"

namespace aan {

void PatientModel::validate() const {
    require(std::isfinite(mass) && mass > 0.0, ErrorKind::Config, "patient mass must be > 0");
    require(std::isfinite(intent_stiffness) && intent_stiffness >= 0.0 && std::isfinite(intent_damping) &&
                intent_damping >= 0.0,
            ErrorKind::Config, "patient intent gains must be >= 0");
    require(std::isfinite(band.stiffness) && band.stiffness >= 0.0, ErrorKind::Config, "band stiffness must be >= 0");
    require(std::isfinite(band.rest_length) && band.rest_length >= 0.0, ErrorKind::Config,
            "band rest length must be >= 0");
    require(!preferred_path.empty(), ErrorKind::Config, "patient needs a preferred path");
    require(band.anchor.size() == preferred_path.dims(), ErrorKind::Config, "band anchor dimension mismatch");
}

Vec impedance_force(const RobotImpedance& imp, const Vec& x_ref, const Vec& v_ref, const Vec& x, const Vec& v) {
    return imp.stiffness * (x_ref - x) + imp.damping * (v_ref - v);
}

Vec band_force(const ElasticBand& band, const Vec& x) {
    const Vec d = x - band.anchor;
    const double len = d.norm();
    if (len == 0.0 || band.stiffness == 0.0) {
        return Vec::Zero(x.size());
    }
    const double stretch = std::max(0.0, len - band.rest_length);
    return band.stiffness * stretch * d / len;
}

Vec patient_force(const PatientModel& patient, double t, const Vec& x, const Vec& v) {
    const Vec x_pref = patient.preferred_path.position_at(t);
    const Vec v_pref = patient.preferred_path.velocity_at(t);
    return patient.intent_stiffness * (x_pref - x) + patient.intent_damping * (v_pref - v) - band_force(patient.band, x);
}

namespace {

std::size_t step_count(double duration, double dt) {
    return static_cast<std::size_t>(std::llround(duration / dt)) + 1;
}

bool all_finite(const Vec& v) {
    return v.allFinite();
}

}  // namespace

EpisodeLog run_episode(const SessionConfig& cfg, const RobotImpedance& imp, const PatientModel& patient,
                       const TimedTrajectory& reference, double dt_sim) {
    const RobotImpedance gains = imp;
    return run_episode(
        cfg, [&gains](const ControlInput& in) { return impedance_force(gains, in.x_ref, in.v_ref, in.x, in.v); },
        patient, reference, dt_sim);
}

EpisodeLog run_episode(const SessionConfig& cfg, const ControlLaw& law, const PatientModel& patient,
                       const TimedTrajectory& reference, double dt_sim) {
    patient.validate();
    require(!reference.empty(), ErrorKind::InvalidArgument, "empty reference");
    require(reference.duration() >= cfg.duration - 1e-9, ErrorKind::OutOfRange,
            "reference does not span the episode duration");
    require(std::isfinite(dt_sim) && dt_sim > 0.0, ErrorKind::InvalidArgument, "dt_sim must be > 0");
    const double ratio = cfg.duration / dt_sim;
    require(std::abs(ratio - std::round(ratio)) < 1e-6, ErrorKind::InvalidArgument, "dt_sim must divide duration");

    const TimedTrajectory ref = reference.has_velocities() ? reference : reference.with_velocities();
    PatientModel human = patient;
    if (!human.preferred_path.has_velocities()) {
        human.preferred_path = human.preferred_path.with_velocities();
    }

    const std::size_t n = step_count(cfg.duration, dt_sim);
    const Eigen::Index d = ref.dims();
    Mat pos(static_cast<Eigen::Index>(n), d);
    Mat vel(static_cast<Eigen::Index>(n), d);
    Mat f_ctrl(static_cast<Eigen::Index>(n), d);
    Mat f_ext(static_cast<Eigen::Index>(n), d);
    Mat ref_pos(static_cast<Eigen::Index>(n), d);
    Mat ref_vel(static_cast<Eigen::Index>(n), d);

    Rng noise(derive_seed(cfg.seed, 0x5e75e7ULL));
    Vec x = ref.position(0);
    Vec v = Vec::Zero(d);
    Vec x_meas(d);
    for (std::size_t k = 0; k < n; ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        const double t = static_cast<double>(k) * dt_sim;
        const Vec x_r = ref.position_at(t);
        const Vec v_r = ref.velocity_at(t);
        x_meas = x;
        if (cfg.sensor_noise > 0.0) {
            for (Eigen::Index i = 0; i < d; ++i) {
                x_meas[i] += cfg.sensor_noise * noise.normal();
            }
        }
        const Vec fc = law(ControlInput{k, t, x_r, v_r, x_meas, v});
        const Vec fe = patient_force(human, t, x, v);
        if (!all_finite(fc) || !all_finite(fe) || !all_finite(x) || !all_finite(v)) {
            fail(ErrorKind::Diverged, "simulation diverged at step " + std::to_string(k) + " (t = " +
                                          format_double(t) + " s)");
        }
        pos.row(row) = x.transpose();
        vel.row(row) = v.transpose();
        f_ctrl.row(row) = fc.transpose();
        f_ext.row(row) = fe.transpose();
        ref_pos.row(row) = x_r.transpose();
        ref_vel.row(row) = v_r.transpose();

        v += dt_sim * (fc + fe) / human.mass;
        x += dt_sim * v;
    }

    EpisodeLog log;
    log.actual = TimedTrajectory(dt_sim, std::move(pos), std::move(vel));
    log.control_forces = std::move(f_ctrl);
    log.external_forces = std::move(f_ext);
    log.reference = TimedTrajectory(dt_sim, std::move(ref_pos), std::move(ref_vel));
    return log;
}

ForceTrack::ForceTrack(std::span<const ForceEvent> events, double dt, std::size_t steps, Eigen::Index dims)
    : forces_(Mat::Zero(static_cast<Eigen::Index>(steps), dims)) {
    const double last = static_cast<double>(steps - 1) * dt;
    for (const auto& e : events) {
        require(e.force.size() == dims, ErrorKind::Dimension, "force event dimension mismatch");
        require(std::isfinite(e.time) && e.time >= -1e-9 && e.time <= last + 1e-9, ErrorKind::OutOfRange,
                "force event at t = " + format_double(e.time) + " s lies outside the trajectory");
        const auto k = std::min<long long>(std::llround(e.time / dt), static_cast<long long>(steps - 1));
        forces_.row(static_cast<Eigen::Index>(std::max(0LL, k))) += e.force.transpose();
    }
}

TimedTrajectory replay_with_forces(const TimedTrajectory& actual, std::span<const ForceEvent> events,
                                   const RobotImpedance& imp) {
    require(actual.size() >= 2, ErrorKind::InvalidArgument, "replay needs a trajectory with non-zero duration");
    const TimedTrajectory patient = actual.has_velocities() ? actual : actual.with_velocities();
    const double dt = patient.dt();
    const std::size_t n = patient.size();
    const Eigen::Index d = patient.dims();
    const ForceTrack track(events, dt, n, d);

    Mat pos(static_cast<Eigen::Index>(n), d);
    Mat vel(static_cast<Eigen::Index>(n), d);
    Vec x = patient.position(0);
    Vec v = patient.velocity(0);
    for (std::size_t k = 0; k < n; ++k) {
        if (!x.allFinite() || !v.allFinite()) {
            fail(ErrorKind::Diverged, "therapist replay diverged at step " + std::to_string(k));
        }
        pos.row(static_cast<Eigen::Index>(k)) = x.transpose();
        vel.row(static_cast<Eigen::Index>(k)) = v.transpose();
        const Vec f = impedance_force(imp, patient.position(k), patient.velocity(k), x, v) + track.at(k);
        v += dt * f;
        x += dt * v;
    }
    return TimedTrajectory(dt, std::move(pos), std::move(vel));
}

namespace {

std::string column_header(Eigen::Index d) {
    if (d == 2) {
        return "t,x,y,vx,vy,fcx,fcy,fex,fey";
    }
    std::string h = "t";
    for (const char* prefix : {"x", "v", "fc", "fe"}) {
        for (Eigen::Index i = 0; i < d; ++i) {
            h += ",";
            h += prefix;
            h += std::to_string(i);
        }
    }
    return h;
}

void append_row(std::string& line, const Mat& m, Eigen::Index row) {
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
        line += ',';
        append_double(line, m(row, i));
    }
}

void append_array(std::string& line, const Mat& m, Eigen::Index row) {
    line += '[';
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
        if (i > 0) {
            line += ',';
        }
        append_double(line, m(row, i));
    }
    line += ']';
}

}  // namespace

void EpisodeLog::write_csv(std::ostream& os) const {
    const Eigen::Index d = actual.dims();
    os << column_header(d) << '\n';
    std::string line;
    for (std::size_t k = 0; k < steps(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        line.clear();
        append_double(line, actual.time(k));
        append_row(line, actual.positions(), r);
        append_row(line, actual.velocities(), r);
        append_row(line, control_forces, r);
        append_row(line, external_forces, r);
        line += '\n';
        os << line;
    }
}

void EpisodeLog::write_jsonl(std::ostream& os) const {
    std::string line;
    for (std::size_t k = 0; k < steps(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        line = "{\"t\":";
        append_double(line, actual.time(k));
        line += ",\"x\":";
        append_array(line, actual.positions(), r);
        line += ",\"v\":";
        append_array(line, actual.velocities(), r);
        line += ",\"f_ctrl\":";
        append_array(line, control_forces, r);
        line += ",\"f_ext\":";
        append_array(line, external_forces, r);
        line += "}\n";
        os << line;
    }
}

EpisodeLog EpisodeLog::read_csv(std::istream& is) {
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), ErrorKind::Io, "episode CSV is empty");
    const auto header = split(line, ',');
    require(header.size() >= 5 && (header.size() - 1) % 4 == 0 && header[0] == "t", ErrorKind::Io,
            "unexpected episode CSV header");
    const auto d = static_cast<Eigen::Index>((header.size() - 1) / 4);
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        const auto fields = split(line, ',');
        require(fields.size() == header.size(), ErrorKind::Io, "episode CSV row has wrong field count");
        std::vector<double> row;
        row.reserve(fields.size());
        for (auto f : fields) {
            row.push_back(parse_double(f));
        }
        rows.push_back(std::move(row));
    }
    require(rows.size() >= 2, ErrorKind::Io, "episode CSV needs at least two rows");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Mat pos(n, d), vel(n, d), fc(n, d), fe(n, d);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& r = rows[static_cast<std::size_t>(k)];
        for (Eigen::Index i = 0; i < d; ++i) {
            pos(k, i) = r[static_cast<std::size_t>(1 + i)];
            vel(k, i) = r[static_cast<std::size_t>(1 + d + i)];
            fc(k, i) = r[static_cast<std::size_t>(1 + 2 * d + i)];
            fe(k, i) = r[static_cast<std::size_t>(1 + 3 * d + i)];
        }
    }
    const double dt = rows[1][0] - rows[0][0];
    EpisodeLog log;
    log.actual = TimedTrajectory(dt, std::move(pos), std::move(vel));
    log.control_forces = std::move(fc);
    log.external_forces = std::move(fe);
    return log;
}

}  // namespace aan
