#include "socest/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <string>
#include <thread>

#include "socest/errors.hpp"

namespace socest {

double mae(std::span<const double> estimate, std::span<const double> truth, std::span<const bool> mask) {
    if (estimate.size() != truth.size()) throw DomainError("mae: estimate and truth differ in length");
    if (!mask.empty() && mask.size() != truth.size()) throw DomainError("mae: mask length differs");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (!mask.empty() && !mask[k]) continue;
        sum += std::abs(estimate[k] - truth[k]);
        ++n;
    }
    if (n == 0) throw DomainError("mae: no samples selected");
    return 100.0 * sum / static_cast<double>(n);
}

Profile make_drive_profile(double duration, double dt, std::uint64_t seed, const DriveProfileOptions& opts) {
    if (!(dt > 0.0) || !(duration > dt)) throw DomainError("drive profile: need duration > dt > 0");
    if (!(opts.max_c_rate >= 0.0) || !(opts.capacity_ah > 0.0) || !(opts.min_segment > 0.0) ||
        !(opts.max_segment >= opts.min_segment))
        throw DomainError("drive profile: invalid options");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double i_max = opts.max_c_rate * opts.capacity_ah;
    const auto n = static_cast<std::size_t>(std::floor(duration / dt));

    std::vector<double> current;
    current.reserve(n);
    while (current.size() < n) {
        const double seg = opts.min_segment + unit(rng) * (opts.max_segment - opts.min_segment);
        const double mode = unit(rng);
        const double magnitude = unit(rng) * i_max;
        double i = 0.0;
        if (mode < 0.55) i = -magnitude;                 // discharge
        else if (mode < 0.85) i = 0.6 * magnitude;       // regenerative charge
        const auto len = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seg / dt)));
        for (std::size_t k = 0; k < len && current.size() < n; ++k) current.push_back(i);
    }
    return Profile::uniform(std::move(current), dt);
}

EstimatorOptions bench_filter_options() {
    EstimatorOptions o;
    o.p0 = Vec3(1e-6, 1e-6, 1e-6).asDiagonal();
    return o;
}

void NoiseSpec::validate() const {
    if (!(current_noise_var >= 0.0) || !(voltage_noise_var >= 0.0))
        throw DomainError("noise: variances must be non-negative");
}

Profile add_measurement_noise(const Profile& clean, const NoiseSpec& noise) {
    noise.validate();
    if (!clean.has_voltage()) throw DomainError("noise: profile has no voltage column");
    Profile out = clean;
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double si = std::sqrt(noise.current_noise_var);
    const double sv = std::sqrt(noise.voltage_noise_var);
    auto& v = *out.voltage;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out.current[k] += si * gauss(rng);
        v[k] += sv * gauss(rng);
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    // splitmix64 finalizer over a combination of the three inputs
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(master) ^ stream) ^ index);
}

GroundTruth make_ground_truth(const EcmParams& params_true, const CellState& initial, const Profile& drive) {
    const auto traj = simulate(params_true, initial, drive);
    GroundTruth gt;
    gt.clean = drive;
    gt.clean.voltage.emplace(traj.size());
    gt.soc.resize(traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) {
        (*gt.clean.voltage)[k] = traj[k].voltage;
        gt.soc[k] = traj[k].state.z;
    }
    return gt;
}

TrialMaes run_trial(const TrialSetup& setup, const GroundTruth& truth, const NoiseSpec& noise,
                    std::span<const EstimatorKind> kinds) {
    const Profile measured = add_measurement_noise(truth.clean, noise);
    EstimatorOptions opts = setup.filter;
    opts.window = setup.window;
    CellState init;
    init.z = clamp_soc(setup.initial_estimate);

    TrialMaes out;
    out.fill(std::numeric_limits<double>::quiet_NaN());
    for (EstimatorKind kind : kinds) {
        const auto est = estimator_run(kind, setup.params_filter, measured, init, opts);
        out[static_cast<std::size_t>(kind)] = mae(est, truth.soc);
    }
    return out;
}

double run_trial(const TrialSetup& setup, const GroundTruth& truth, const NoiseSpec& noise, EstimatorKind kind) {
    const EstimatorKind one[] = {kind};
    return run_trial(setup, truth, noise, one)[static_cast<std::size_t>(kind)];
}

std::string_view to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::WindowSize: return "window_size";
        case SweepAxis::NoisePower: return "noise_power";
        case SweepAxis::ParameterError: return "parameter_error";
    }
    return "?";
}

SweepAxis parse_sweep_axis(std::string_view name) {
    for (SweepAxis a : {SweepAxis::WindowSize, SweepAxis::NoisePower, SweepAxis::ParameterError})
        if (to_string(a) == name) return a;
    throw DomainError("unknown sweep axis '" + std::string(name) + "'");
}

void SweepSpec::validate() const {
    if (n_trials < 1) throw DomainError("sweep: n_trials must be at least 1");
    if (axis_values.empty()) throw DomainError("sweep: no axis values");
    if (estimators.empty()) throw DomainError("sweep: no estimators");
    base_noise.validate();
    for (double v : axis_values) {
        if (!std::isfinite(v)) throw DomainError("sweep: non-finite axis value");
        if (axis == SweepAxis::WindowSize && (v < 1.0 || v != std::floor(v)))
            throw DomainError("sweep: window sizes must be positive integers");
        if (axis == SweepAxis::ParameterError && !(v > -100.0))
            throw DomainError("sweep: parameter error must exceed -100 %");
    }
    if (axis == SweepAxis::NoisePower && !(base_noise.voltage_noise_var > 0.0))
        throw DomainError("sweep: noise-power axis needs a positive base voltage variance");
}

const BenchRow& BenchResult::at(double axis_value, EstimatorKind kind) const {
    for (const auto& row : rows)
        if (row.axis_value == axis_value && row.estimator == kind) return row;
    throw DomainError("bench result: no row for axis value " + std::to_string(axis_value) + ", estimator " +
                      std::string(to_string(kind)));
}

MeanCi mean_ci95(std::span<const double> samples) {
    if (samples.empty()) throw DomainError("mean_ci95: no samples");
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= n;
    if (samples.size() == 1) return {mean, mean, mean};
    double ss = 0.0;
    for (double x : samples) ss += (x - mean) * (x - mean);
    const double half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    return {mean, mean - half, mean + half};
}

BenchResult run_sweep(const SweepSpec& spec, const BenchConfig& config) {
    spec.validate();
    config.params_true.validate();

    const CellState initial{config.initial_soc, 0.0, 0.0, false};
    const Profile drive = make_drive_profile(config.duration, config.dt,
                                             derive_seed(config.master_seed, 0xD21, 0), config.drive);
    const GroundTruth truth = make_ground_truth(config.params_true, initial, drive);

    const std::size_t n_values = spec.axis_values.size();
    const std::size_t n_trials = spec.n_trials;
    const std::size_t n_jobs = n_values * n_trials;
    std::vector<TrialMaes> results(n_jobs);

    auto setup_for = [&](double value) {
        TrialSetup s{config.params_true, config.params_true, initial,
                     config.initial_soc + config.initial_soc_error, config.window, config.filter};
        double perr = config.parameter_error;
        if (spec.axis == SweepAxis::WindowSize) s.window = static_cast<std::size_t>(value);
        if (spec.axis == SweepAxis::ParameterError) perr = value;
        s.params_filter = config.params_true.with_passive(config.params_true.passive().scaled(1.0 + perr / 100.0));
        s.params_filter.validate();
        return s;
    };
    auto noise_for = [&](double value, std::size_t trial) {
        NoiseSpec n = spec.base_noise;
        if (spec.axis == SweepAxis::NoisePower) {
            const double factor = std::pow(10.0, value) / spec.base_noise.voltage_noise_var;
            n.voltage_noise_var *= factor;
            n.current_noise_var *= factor;
        }
        n.seed = derive_seed(config.master_seed, static_cast<std::uint64_t>(spec.axis) + 1, trial);
        return n;
    };

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t job = next++; job < n_jobs; job = next++) {
            const std::size_t v = job / n_trials;
            const std::size_t t = job % n_trials;
            try {
                results[job] = run_trial(setup_for(spec.axis_values[v]), truth,
                                         noise_for(spec.axis_values[v], t), spec.estimators);
            } catch (const std::exception& e) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::make_exception_ptr(
                        Error("sweep " + std::string(to_string(spec.axis)) + "=" +
                              std::to_string(spec.axis_values[v]) + ", trial " + std::to_string(t) + ": " +
                              e.what()));
                }
                next = n_jobs;
            }
        }
    };

    std::size_t threads = config.threads ? config.threads : std::thread::hardware_concurrency();
    threads = std::clamp<std::size_t>(threads, 1, n_jobs);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    BenchResult result;
    result.axis = spec.axis;
    std::vector<double> samples(n_trials);
    for (std::size_t v = 0; v < n_values; ++v) {
        for (EstimatorKind kind : spec.estimators) {
            for (std::size_t t = 0; t < n_trials; ++t)
                samples[t] = results[v * n_trials + t][static_cast<std::size_t>(kind)];
            const MeanCi ci = mean_ci95(samples);
            result.rows.push_back({spec.axis_values[v], kind, ci.mean, ci.lo, ci.hi});
        }
    }
    return result;
}

}  // namespace socest
