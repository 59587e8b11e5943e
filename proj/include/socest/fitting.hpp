#pragma once

// Cell characterization: OCV-SoC table from slow charge/discharge sweeps and
// passive components (R0, R1, C1, R2, C2) by Levenberg-Marquardt on the
// terminal-voltage residual of an incremental-current test.

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "socest/ecm.hpp"

namespace socest {

struct SocVoltage {
    double z = 0.0;
    double v = 0.0;
};

struct OcvSweep {
    std::vector<SocVoltage> charge_curve;
    std::vector<SocVoltage> discharge_curve;
};

// Resamples both curves onto {0, spacing, ..., 1} and averages them.
// Throws FitError naming the first node where the average fails to increase.
OcvTable build_ocv_table(const OcvSweep& sweep, double spacing = kDefaultOcvSpacing);

// SoC axes for a low-current discharge (full -> cut-off) and recharge
// (cut-off -> full) by Coulomb counting, normalized so the discharge runs
// 1 -> 0 and the charge 0 -> 1. Both profiles need voltage.
OcvSweep sweep_from_profiles(const Profile& discharge, const Profile& charge);

// Low-current sweeps of a known table with symmetric hysteresis: the charge
// curve sits `hysteresis` above the table and the discharge curve below it.
OcvSweep make_ocv_sweep(const OcvTable& table, double hysteresis, std::size_t samples = 1001);

struct IncrementalTest {
    double pulse_current = 1.0;    // A, positive charges
    double pulse_duration = 360.0; // s
    double rest_duration = 1800.0; // s
    std::size_t n_pulses = 10;
    double dt = kDefaultDt;
    // Zero-current lead-in before the first pulse; lets the fitter read the
    // initial SoC off a rest voltage.
    double initial_rest = 0.0;
};

Profile make_incremental_current_profile(const IncrementalTest& test);
Profile make_incremental_current_profile(double pulse_current, double pulse_duration,
                                         double rest_duration, std::size_t n_pulses,
                                         double dt = kDefaultDt);

std::vector<double> predict_voltage(const EcmParams& params, const Profile& profile,
                                    const CellState& initial);

struct LmOptions {
    double initial_damping = 1e-3;
    double damping_up = 10.0;
    double damping_down = 10.0;
    double max_damping = 1e16;
    std::size_t max_iterations = 200;
    double gradient_tolerance = 1e-8;  // infinity norm, log-parameter space
    double step_tolerance = 1e-10;     // relative
    double fd_step = 1e-6;             // forward difference, log-parameter space
    PassiveComponents lower_bounds{1e-9, 1e-9, 1e-9, 1e-9, 1e-9};

    void validate() const;
};

struct FitReport {
    PassiveComponents params;
    double final_rss = 0.0;  // V^2
    std::size_t iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    std::vector<double> objective_trace;  // rss after each accepted step, starting at init
};

// Branch order is canonicalized so that r1*c1 <= r2*c2.
PassiveComponents canonical_order(const PassiveComponents& p);

// Minimizes sum_k (V_hat_k - V_k)^2 over the passive components with the OCV
// table and q_max held fixed. The initial SoC is taken from
// `initial_soc` when given, otherwise by inverting the OCV at the first
// sample, which must be at rest.
FitReport fit_passive_components(const Profile& profile, const OcvTable& ocv, double q_max,
                                 const PassiveComponents& init, const LmOptions& opts = {},
                                 std::optional<double> initial_soc = std::nullopt);

}  // namespace socest
