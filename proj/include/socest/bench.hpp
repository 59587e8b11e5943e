#pragma once

// Monte Carlo evaluation harness: synthetic drive profile, noisy measurement
// channels, and sweeps over window size, noise power or parameter error with
// normal-approximation 95 % confidence bands on the MAE.

#include <array>
#include <iterator>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "socest/ecm.hpp"
#include "socest/filters.hpp"

namespace socest {

// Mean absolute SoC error in percent over the samples selected by `mask`
// (all samples when empty). Throws DomainError on length mismatch or an
// empty selection.
double mae(std::span<const double> estimate, std::span<const double> truth,
           std::span<const bool> mask = {});

struct DriveProfileOptions {
    double max_c_rate = 1.0;
    double capacity_ah = 5.0;
    double min_segment = 10.0;   // s
    double max_segment = 120.0;  // s
};

// Piecewise-constant current with mixed charge, discharge and rest segments;
// discharging on average. Deterministic per seed.
Profile make_drive_profile(double duration, double dt, std::uint64_t seed,
                           const DriveProfileOptions& opts = {});

struct NoiseSpec {
    double current_noise_var = 0.0;  // A^2
    double voltage_noise_var = 0.0;  // V^2
    std::uint64_t seed = 0;

    void validate() const;
};

// Adds independent zero-mean Gaussian noise to the current and voltage
// columns of a copy of `clean` (which must carry voltage).
Profile add_measurement_noise(const Profile& clean, const NoiseSpec& noise);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

struct TrialSetup {
    EcmParams params_true;
    EcmParams params_filter;
    CellState initial_true;
    double initial_estimate = 0.0;  // SoC the estimators start from
    std::size_t window = 128;
    EstimatorOptions filter;
};

// Clean ground truth for a trial: SoC trajectory and the noiseless profile
// carrying the true terminal voltage.
struct GroundTruth {
    Profile clean;
    std::vector<double> soc;
};

GroundTruth make_ground_truth(const EcmParams& params_true, const CellState& initial,
                              const Profile& drive);

using TrialMaes = std::array<double, std::size(kAllEstimators)>;

// Runs the listed estimators on one noise realization of `truth`.
// Entries for estimators not listed are NaN.
TrialMaes run_trial(const TrialSetup& setup, const GroundTruth& truth, const NoiseSpec& noise,
                    std::span<const EstimatorKind> kinds = kAllEstimators);

double run_trial(const TrialSetup& setup, const GroundTruth& truth, const NoiseSpec& noise,
                 EstimatorKind kind);

enum class SweepAxis { WindowSize, NoisePower, ParameterError };

std::string_view to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);

// Axis value semantics:
//   window_size      window length N (also the warm-up length)
//   noise_power      log10 of the voltage-noise variance; the current-noise
//                    variance moves by the same factor
//   parameter_error  percent, applied multiplicatively to r0, r1, c1, r2, c2
struct SweepSpec {
    SweepAxis axis = SweepAxis::WindowSize;
    std::vector<double> axis_values;
    std::size_t n_trials = 50;
    NoiseSpec base_noise{1e-1, 1e-5, 0};
    std::vector<EstimatorKind> estimators{std::begin(kAllEstimators), std::end(kAllEstimators)};

    void validate() const;
};

// Filter settings for benchmark trials: the declared initial SoC variance
// (1e-6) is far tighter than the actual initialization error, the regime in
// which hand-set covariances fail and adaptation pays off.
EstimatorOptions bench_filter_options();

struct BenchConfig {
    EcmParams params_true = default_cell();
    double duration = 7200.0;  // s
    double dt = kDefaultDt;
    DriveProfileOptions drive;
    double initial_soc = 0.9;
    double initial_soc_error = -0.05;  // estimator start = initial_soc + error
    double parameter_error = 0.0;      // percent, used off the parameter-error axis
    std::size_t window = 128;          // used off the window-size axis
    EstimatorOptions filter = bench_filter_options();
    std::uint64_t master_seed = 2024;
    std::size_t threads = 0;  // 0 = hardware concurrency
};

struct BenchRow {
    double axis_value = 0.0;
    EstimatorKind estimator = EstimatorKind::AekfMle;
    double mae_mean = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

struct BenchResult {
    SweepAxis axis = SweepAxis::WindowSize;
    std::vector<BenchRow> rows;  // axis-major; estimators in cc, ekf, aekf-mle, aekf-cm order

    const BenchRow& at(double axis_value, EstimatorKind kind) const;
};

struct MeanCi {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// mean +- 1.96 * stddev / sqrt(n); bounds collapse to the mean for n = 1.
MeanCi mean_ci95(std::span<const double> samples);

// Trial t of every axis value uses seed derive_seed(master, axis, t), so the
// same noise realizations are shared across axis values and results do not
// depend on axis-value order.
BenchResult run_sweep(const SweepSpec& spec, const BenchConfig& config);

}  // namespace socest
