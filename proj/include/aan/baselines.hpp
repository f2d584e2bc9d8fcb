#pragma once

#include "aan/policy.hpp"

namespace aan {

/// Error-scheduled stiffness; damping follows from the stiffness.
struct VicParams {
    double k_min = 50.0;   // N/m
    double k_max = 800.0;  // N/m
    double e_ref = 0.05;   // m
    double zeta = 0.7;

    void validate() const;
};

double vic_stiffness(const VicParams& p, double error_norm);
double vic_damping(const VicParams& p, double stiffness, double mass);

/// Control law tracking x_e with the scheduled gains; `mass` sets the damping.
ControlLaw vic_law(const VicParams& p, double mass);

/// Zero-impedance law that transmits the binned therapist events.
ControlLaw direct_force_law(std::span<const ForceEvent> events, const SessionConfig& cfg);

enum class BaselineMethod { Vic, Direct };

/// Baseline session in the policy's log format: iteration 0 plus cfg.iterations
/// iterations on x_e, with matched patient seeds. The direct method's scripted
/// therapist watches the previous iteration, as in run_session.
TherapySession baseline_vic_run(const SessionConfig& cfg, const Task& task, const PatientSpec& patient,
                                const VicParams& params = {});

TherapySession baseline_direct_force_run(const SessionConfig& cfg, const Task& task, const PatientSpec& patient,
                                         const ScriptedTherapist& therapist);

}  // namespace aan
