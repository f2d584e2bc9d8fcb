#pragma once

#include <span>
#include <vector>

#include "aan/core.hpp"
#include "aan/policy.hpp"

namespace aan {

struct PlsModel {
    Mat B;  // inputs x outputs
    Vec x_mean;
    Vec y_mean;
    std::size_t latent = 0;
    Mat W;  // input weights, one column per component
    Mat P;  // X loadings
    Mat Q;  // Y loadings
    Mat T;  // training scores, kept for diagnostics

    Eigen::Index inputs() const { return x_mean.size(); }
    Eigen::Index outputs() const { return y_mean.size(); }
    void validate() const;
};

/// Column-centred NIPALS. Stops early when a score vector vanishes; the
/// requested count is capped at min(rows - 1, columns).
PlsModel pls_fit(const Mat& X, const Mat& Y, std::size_t latent);

Vec pls_predict(const PlsModel& model, const Vec& s);

/// How a via-point slot is stored in Y.
enum class SkillLayout {
    Absolute,  // via mean, or the reference value when the slot was not corrected
    Offset,    // via mean minus the reference, or zero
};

struct SkillDataset {
    Mat X;  // one therapist state per row
    Mat Y;  // slot values, slot-major
    std::vector<double> slot_times;
    Eigen::Index dims = 2;
    SkillLayout layout = SkillLayout::Offset;

    void validate() const;
};

/// Max distance between a via time and a slot's shifted time for assignment.
inline constexpr double kSlotWindow = 0.5;  // s

/// Rows from the therapist samples (D_T) of finished sessions on one task.
SkillDataset skill_dataset(std::span<const TherapySession> sessions, SkillLayout layout);

/// Appends therapist samples taken with the given via shift.
void append_samples(SkillDataset& data, std::span<const TherapistSample> samples, double via_time_shift);
void append_samples(SkillDataset& data, const TherapySession& session);

struct SkillModel {
    PlsModel pls;
    std::vector<double> slot_times;
    Eigen::Index dims = 2;
    SkillLayout layout = SkillLayout::Offset;
};

SkillModel train_skill(const SkillDataset& data, std::size_t latent);

/// Via-points predicted for the session's fresh preference, one per slot at
/// slot time + via shift.
std::vector<ViaPoint> reproduce_skill(const SkillModel& model, const TherapySession& session,
                                      const ProbTrajectory& preference);

/// reproduce_skill as the session's via source, replacing the therapist.
ViaSource skill_via_source(SkillModel model);

/// Bootstrap plus cfg.iterations skill-driven iterations with no therapist events.
TherapySession run_skill_session(const SkillModel& model, const SessionConfig& cfg, const Task& task,
                                 const PatientSpec& patient);

}  // namespace aan
