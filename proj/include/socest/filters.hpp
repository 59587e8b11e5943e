#pragma once

// SoC estimators over the linearized cell model:
//   Coulomb counting, plain EKF, and two adaptive EKFs that re-estimate the
//   process (Sigma) and measurement (sigma^2) noise covariances from a
//   sliding window of residuals: maximum likelihood (MLE) and covariance
//   matching (CM).

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "socest/ecm.hpp"
#include "socest/window_stats.hpp"

namespace socest {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Row3 = Eigen::RowVector3d;

inline Vec3 to_vector(const CellState& s) { return {s.z, s.v_r1, s.v_r2}; }

// x_k = A x_{k-1} + B i + w,  V = h(x) + D i + v,  C = dh/dx.
struct LinearizedModel {
    Mat3 a = Mat3::Identity();
    Vec3 b = Vec3::Zero();
    double d = 0.0;  // R0
    const OcvTable* ocv = nullptr;  // borrowed from the EcmParams

    static LinearizedModel from_params(const EcmParams& params, double dt);

    // [OCV'(z), 1, 1]
    Row3 c_row(const CellState& x) const;
    // Nonlinear output without the feedthrough term.
    double h(const CellState& x) const;
};

struct FilterState {
    CellState x_hat;
    Mat3 p = Mat3::Zero();      // state covariance
    Mat3 sigma = Mat3::Zero();  // process-noise covariance
    double sigma2_meas = 0.0;   // measurement-noise variance, V^2
};

struct StepRecord {
    double e_minus = 0.0;  // pre-fit residual, V
    double e_plus = 0.0;   // post-fit residual, V
    Vec3 k_gain = Vec3::Zero();
    double cpc_term = 0.0;   // C P+ C^T
    double cpc_prior = 0.0;  // C P- C^T
};

// True when `m` is symmetric to 1e-12 (relative to its largest entry) and
// its smallest eigenvalue is >= -rel_floor * max(trace, tiny).
bool is_symmetric_psd(const Mat3& m, double rel_floor = 1e-10);

double coulomb_count_step(double z, double i, double dt, double q_max);

struct Prediction {
    FilterState state;
    CellState predicted;
};

Prediction ekf_predict(const FilterState& fs, const LinearizedModel& model, double i);

struct Correction {
    FilterState state;
    StepRecord record;
};

// Residuals use the full OCV lookup; C only enters the gain and the
// Joseph-form covariance update. Throws NumericalFault if C P- C^T + s^2 <= 0.
Correction ekf_correct(const FilterState& fs, const LinearizedModel& model, double i,
                       double v_measured);

// Expects `ws` to already contain `last`.
FilterState mle_adapt(const WindowStats& ws, const StepRecord& last, const FilterState& fs);

inline constexpr double kDefaultSigma2Floor = 1e-8;

FilterState cm_adapt(const WindowStats& ws, const StepRecord& last, const FilterState& fs,
                     double sigma2_floor = kDefaultSigma2Floor);

enum class EstimatorKind { CoulombCounting, Ekf, AekfMle, AekfCm };

inline constexpr EstimatorKind kAllEstimators[] = {
    EstimatorKind::CoulombCounting, EstimatorKind::Ekf, EstimatorKind::AekfMle,
    EstimatorKind::AekfCm};

// "cc", "ekf", "aekf-mle", "aekf-cm"
std::string_view to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(std::string_view name);

struct EstimatorOptions {
    std::size_t window = 128;
    // Steps before adaptation starts; defaults to `window`.
    std::optional<std::size_t> warmup;
    bool adapt = true;
    Mat3 p0 = Vec3(1e-2, 1e-6, 1e-6).asDiagonal();
    Mat3 sigma0 = Vec3(1e-10, 1e-8, 1e-8).asDiagonal();
    double sigma2_0 = 1e-4;
    double sigma2_floor = kDefaultSigma2Floor;
    double first_dt = kDefaultDt;
    // Called after every filter step (not for Coulomb counting) with the
    // state the step produced; used by test harnesses to audit P.
    std::function<void(const FilterState&, const StepRecord&)> on_step;

    std::size_t warmup_steps() const { return warmup.value_or(window); }
};

// Single-threaded state machine. Each step: predict -> correct -> window
// push -> adapt; adapted covariances apply from the next step.
class Estimator {
public:
    Estimator(EstimatorKind kind, EcmParams params, const CellState& initial,
              EstimatorOptions options = {});

    // Consumes one sample (current applied over the preceding `dt`, voltage
    // at the end of it) and returns the SoC estimate.
    double step(double i, double v_measured, double dt);

    EstimatorKind kind() const { return kind_; }
    const FilterState& state() const { return fs_; }
    const StepRecord& last_record() const { return record_; }
    const WindowStats& window() const { return window_; }
    std::size_t steps() const { return steps_; }

private:
    EstimatorKind kind_;
    EcmParams params_;
    EstimatorOptions options_;
    FilterState fs_;
    StepRecord record_;
    WindowStats window_;
    std::size_t steps_ = 0;
    LinearizedModel model_;
    double model_dt_ = -1.0;
};

std::vector<double> estimator_run(EstimatorKind kind, const EcmParams& params,
                                  const Profile& profile, const CellState& initial,
                                  const EstimatorOptions& options = {});

}  // namespace socest
