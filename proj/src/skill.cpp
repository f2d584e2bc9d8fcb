#include "aan/skill.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>
#include <spdlog/spdlog.h>

namespace aan {

void PlsModel::validate() const {
    require(latent >= 1, ErrorKind::InvalidArgument, "PLS model has no latent components");
    require(B.rows() == x_mean.size() && B.cols() == y_mean.size(), ErrorKind::Dimension,
            "PLS weight matrix does not match the centres");
    require(B.allFinite() && x_mean.allFinite() && y_mean.allFinite(), ErrorKind::InvalidArgument,
            "PLS model has non-finite entries");
}

PlsModel pls_fit(const Mat& X, const Mat& Y, std::size_t latent) {
    require(X.rows() == Y.rows(), ErrorKind::Dimension, "X and Y row counts differ");
    require(X.rows() >= 2, ErrorKind::InsufficientData, "PLS needs at least two rows");
    require(X.cols() >= 1 && Y.cols() >= 1, ErrorKind::Dimension, "PLS needs at least one input and one output");
    require(latent >= 1, ErrorKind::InvalidArgument, "latent count must be >= 1");
    require(X.allFinite() && Y.allFinite(), ErrorKind::InvalidArgument, "non-finite PLS data");

    PlsModel m;
    m.x_mean = X.colwise().mean().transpose();
    m.y_mean = Y.colwise().mean().transpose();
    Mat Xc = X.rowwise() - m.x_mean.transpose();
    const Mat Yc = Y.rowwise() - m.y_mean.transpose();
    const double x_scale = Xc.norm();
    require(x_scale > 0.0, ErrorKind::Degenerate, "X has zero variance");

    const auto cap = static_cast<std::size_t>(std::min<Eigen::Index>(X.rows() - 1, X.cols()));
    const std::size_t want = std::min(latent, cap);
    m.W.resize(X.cols(), static_cast<Eigen::Index>(want));
    m.P.resize(X.cols(), static_cast<Eigen::Index>(want));
    m.Q.resize(Y.cols(), static_cast<Eigen::Index>(want));
    m.T.resize(X.rows(), static_cast<Eigen::Index>(want));

    std::size_t a = 0;
    for (; a < want; ++a) {
        const Mat C = Xc.transpose() * Yc;
        Vec w;
        if (C.norm() > 1e-14 * x_scale) {
            Eigen::JacobiSVD<Mat> svd(C, Eigen::ComputeThinU);
            w = svd.matrixU().col(0);
        } else {
            // Y carries nothing the residual X can explain; fall back to X's own
            // dominant direction so the component is still well defined.
            Eigen::JacobiSVD<Mat> svd(Xc, Eigen::ComputeThinV);
            w = svd.matrixV().col(0);
        }
        Eigen::Index imax = 0;
        w.cwiseAbs().maxCoeff(&imax);
        if (w[imax] < 0.0) {
            w = -w;
        }
        const Vec t = Xc * w;
        const double tt = t.squaredNorm();
        if (std::sqrt(tt) < 1e-12) {
            break;
        }
        const Vec p = Xc.transpose() * t / tt;
        const Vec q = Yc.transpose() * t / tt;
        Xc -= t * p.transpose();
        const auto col = static_cast<Eigen::Index>(a);
        m.W.col(col) = w;
        m.P.col(col) = p;
        m.Q.col(col) = q;
        m.T.col(col) = t;
    }
    require(a >= 1, ErrorKind::Degenerate, "PLS extracted no components");
    if (a < latent) {
        spdlog::debug("PLS kept {} of {} requested components", a, latent);
    }
    const auto k = static_cast<Eigen::Index>(a);
    m.latent = a;
    m.W.conservativeResize(Eigen::NoChange, k);
    m.P.conservativeResize(Eigen::NoChange, k);
    m.Q.conservativeResize(Eigen::NoChange, k);
    m.T.conservativeResize(Eigen::NoChange, k);
    const Mat PtW = m.P.transpose() * m.W;
    m.B = m.W * PtW.partialPivLu().solve(m.Q.transpose());
    require(m.B.allFinite(), ErrorKind::IllConditioned, "PLS weight matrix is not finite");
    return m;
}

Vec pls_predict(const PlsModel& model, const Vec& s) {
    require(s.size() == model.inputs(), ErrorKind::Dimension,
            "state has length " + std::to_string(s.size()) + ", model expects " + std::to_string(model.inputs()));
    return model.B.transpose() * (s - model.x_mean) + model.y_mean;
}

void SkillDataset::validate() const {
    require(X.rows() == Y.rows(), ErrorKind::Dimension, "skill dataset row counts differ");
    require(Y.cols() == static_cast<Eigen::Index>(slot_times.size()) * dims, ErrorKind::Dimension,
            "skill dataset Y width does not match the slots");
    require(X.allFinite() && Y.allFinite(), ErrorKind::InvalidArgument, "skill dataset has non-finite entries");
}

namespace {

// Index of the via nearest the slot's shifted time, or -1 when none is close.
std::ptrdiff_t nearest_via(std::span<const ViaPoint> vias, double slot_time) {
    std::ptrdiff_t best = -1;
    double best_gap = kSlotWindow;
    for (std::size_t v = 0; v < vias.size(); ++v) {
        const double gap = std::abs(vias[v].time - slot_time);
        if (gap <= best_gap) {
            best_gap = gap;
            best = static_cast<std::ptrdiff_t>(v);
        }
    }
    return best;
}

}  // namespace

void append_samples(SkillDataset& data, std::span<const TherapistSample> samples, double via_time_shift) {
    const Eigen::Index width = static_cast<Eigen::Index>(data.slot_times.size()) * data.dims;
    for (const auto& sample : samples) {
        require(sample.reference.dims() == data.dims, ErrorKind::Dimension,
                "therapist sample dimension differs from the dataset");
        Vec y(width);
        for (std::size_t k = 0; k < data.slot_times.size(); ++k) {
            const double tv = data.slot_times[k] + via_time_shift;
            const Vec ref = sample.reference.position_at(tv);
            const auto v = nearest_via(sample.vias, tv);
            Vec value = v >= 0 ? Vec(sample.vias[static_cast<std::size_t>(v)].mean) : ref;
            if (data.layout == SkillLayout::Offset) {
                value -= ref;
            }
            y.segment(static_cast<Eigen::Index>(k) * data.dims, data.dims) = value;
        }
        const Eigen::Index row = data.X.rows();
        if (row == 0) {
            data.X.resize(0, sample.state.size());
            data.Y.resize(0, width);
        }
        require(sample.state.size() == data.X.cols(), ErrorKind::Dimension, "therapist state width differs");
        data.X.conservativeResize(row + 1, Eigen::NoChange);
        data.Y.conservativeResize(row + 1, Eigen::NoChange);
        data.X.row(row) = sample.state.transpose();
        data.Y.row(row) = y.transpose();
    }
}

void append_samples(SkillDataset& data, const TherapySession& session) {
    require(session.task.keypoint_times == data.slot_times, ErrorKind::Dimension,
            "session task slots differ from the dataset");
    require(session.cfg.dims == data.dims, ErrorKind::Dimension, "session dimension differs from the dataset");
    append_samples(data, session.therapist_data, session.cfg.via_time_shift);
}

SkillDataset skill_dataset(std::span<const TherapySession> sessions, SkillLayout layout) {
    require(!sessions.empty(), ErrorKind::InsufficientData, "no sessions to train on");
    SkillDataset data;
    data.slot_times = sessions.front().task.keypoint_times;
    data.dims = sessions.front().cfg.dims;
    data.layout = layout;
    for (const auto& s : sessions) {
        require(s.task.name == sessions.front().task.name, ErrorKind::InvalidArgument,
                "skill datasets are task-specific; got '" + s.task.name + "' and '" + sessions.front().task.name +
                    "'");
        append_samples(data, s);
    }
    data.validate();
    return data;
}

SkillModel train_skill(const SkillDataset& data, std::size_t latent) {
    data.validate();
    SkillModel m;
    m.pls = pls_fit(data.X, data.Y, latent);
    m.slot_times = data.slot_times;
    m.dims = data.dims;
    m.layout = data.layout;
    return m;
}

std::vector<ViaPoint> reproduce_skill(const SkillModel& model, const TherapySession& session,
                                      const ProbTrajectory& preference) {
    const auto& cfg = session.cfg;
    require(model.dims == cfg.dims, ErrorKind::Dimension, "skill model dimension differs from the session");
    require(preference.size() > 0, ErrorKind::InvalidArgument, "session has no preference yet");
    const Vec s = build_therapist_state(preference, session.task.desired, cfg.waypoints);
    const Vec y = pls_predict(model.pls, s);
    require(y.size() == static_cast<Eigen::Index>(model.slot_times.size()) * model.dims, ErrorKind::Dimension,
            "skill model output does not match its slots");
    std::vector<ViaPoint> out;
    for (std::size_t k = 0; k < model.slot_times.size(); ++k) {
        const double tv = model.slot_times[k] + cfg.via_time_shift;
        require(tv > 0.0 && tv <= cfg.duration, ErrorKind::OutOfRange,
                "skill slot at " + std::to_string(tv) + " s is outside the episode");
        ViaPoint v;
        v.time = tv;
        v.mean = y.segment(static_cast<Eigen::Index>(k) * model.dims, model.dims);
        if (model.layout == SkillLayout::Offset) {
            v.mean += session.reference.position_at(tv);
        }
        v.covariance = preference.covariance_at(tv) * cfg.via_cov_scale;
        out.push_back(std::move(v));
    }
    check_via_budget(out.size(), cfg);
    return out;
}

ViaSource skill_via_source(SkillModel model) {
    return [model = std::move(model)](const TherapySession& s, const ProbTrajectory& preference) {
        return ViaDerivation{reproduce_skill(model, s, preference), {}};
    };
}

TherapySession run_skill_session(const SkillModel& model, const SessionConfig& cfg, const Task& task,
                                 const PatientSpec& patient) {
    TherapySession s = start_session(cfg, task, patient);
    const ViaSource source = skill_via_source(model);
    while (s.iteration < cfg.iterations) {
        advance_session(s, source);
    }
    return s;
}

}  // namespace aan
