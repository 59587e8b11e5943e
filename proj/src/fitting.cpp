#include "socest/fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "socest/errors.hpp"

namespace socest {

namespace {

// Sorts a sweep curve by SoC and checks it spans [0, 1].
std::vector<SocVoltage> ascending(std::vector<SocVoltage> curve, const char* name) {
    if (curve.size() < 2) throw FitError(std::string(name) + " curve needs at least 2 samples");
    for (const auto& p : curve) {
        if (!(p.z >= 0.0 && p.z <= 1.0))
            throw FitError(std::string(name) + " curve has SoC outside [0, 1]");
    }
    const bool increasing = curve.back().z > curve.front().z;
    for (std::size_t k = 1; k < curve.size(); ++k) {
        const bool ok = increasing ? curve[k].z > curve[k - 1].z : curve[k].z < curve[k - 1].z;
        if (!ok) throw FitError(std::string(name) + " curve SoC not monotonic at sample " + std::to_string(k));
    }
    if (!increasing) std::reverse(curve.begin(), curve.end());
    constexpr double eps = 1e-9;
    if (curve.front().z > eps || curve.back().z < 1.0 - eps)
        throw FitError(std::string(name) + " curve does not cover SoC [0, 1]");
    return curve;
}

double resample(const std::vector<SocVoltage>& curve, double z) {
    auto it = std::lower_bound(curve.begin(), curve.end(), z,
                               [](const SocVoltage& p, double zz) { return p.z < zz; });
    if (it == curve.begin()) return curve.front().v;
    if (it == curve.end()) return curve.back().v;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (z - lo.z) / (hi.z - lo.z);
    return lo.v + w * (hi.v - lo.v);
}

using Theta = Eigen::Matrix<double, 5, 1>;

Theta to_log(const PassiveComponents& p) {
    return Theta(std::log(p.r0), std::log(p.r1), std::log(p.c1), std::log(p.r2), std::log(p.c2));
}

PassiveComponents from_log(const Theta& t) {
    return {std::exp(t(0)), std::exp(t(1)), std::exp(t(2)), std::exp(t(3)), std::exp(t(4))};
}

}  // namespace

OcvTable build_ocv_table(const OcvSweep& sweep, double spacing) {
    const double nodes = std::round(1.0 / spacing);
    if (!(spacing > 0.0) || std::abs(nodes * spacing - 1.0) > 1e-9)
        throw FitError("build_ocv_table: spacing must divide 1 evenly");
    const auto charge = ascending(sweep.charge_curve, "charge");
    const auto discharge = ascending(sweep.discharge_curve, "discharge");

    const auto n = static_cast<std::size_t>(nodes) + 1;
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double z = k + 1 == n ? 1.0 : static_cast<double>(k) / static_cast<double>(n - 1);
        v[k] = 0.5 * (resample(charge, z) + resample(discharge, z));
        if (k > 0 && !(v[k] > v[k - 1]))
            throw FitError("build_ocv_table: averaged OCV not increasing at node " + std::to_string(k) +
                           " (SoC " + std::to_string(z) + ")");
    }
    return OcvTable::uniform(std::move(v));
}

namespace {

std::vector<SocVoltage> coulomb_axis(const Profile& p, bool discharge, const char* name) {
    p.validate();
    if (!p.has_voltage()) throw FitError(std::string(name) + " profile has no voltage column");
    if (p.size() < 2) throw FitError(std::string(name) + " profile needs at least 2 samples");
    std::vector<double> q(p.size(), 0.0);
    for (std::size_t k = 1; k < p.size(); ++k) {
        const double i = discharge ? -p.current[k] : p.current[k];
        if (!(i > 0.0))
            throw FitError(std::string(name) + " profile current has the wrong sign at sample " + std::to_string(k));
        q[k] = q[k - 1] + i * p.dt(k);
    }
    std::vector<SocVoltage> curve(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double frac = k + 1 == p.size() ? 1.0 : q[k] / q.back();
        curve[k] = {discharge ? 1.0 - frac : frac, (*p.voltage)[k]};
    }
    return curve;
}

}  // namespace

OcvSweep sweep_from_profiles(const Profile& discharge, const Profile& charge) {
    return {coulomb_axis(charge, false, "charge"), coulomb_axis(discharge, true, "discharge")};
}

OcvSweep make_ocv_sweep(const OcvTable& table, double hysteresis, std::size_t samples) {
    if (samples < 2) throw DomainError("make_ocv_sweep: need at least 2 samples");
    OcvSweep sweep;
    sweep.charge_curve.reserve(samples);
    sweep.discharge_curve.reserve(samples);
    for (std::size_t k = 0; k < samples; ++k) {
        const double z_up = static_cast<double>(k) / static_cast<double>(samples - 1);
        const double z_down = 1.0 - z_up;
        sweep.charge_curve.push_back({z_up, table.lookup(z_up) + hysteresis});
        sweep.discharge_curve.push_back({z_down, table.lookup(z_down) - hysteresis});
    }
    return sweep;
}

Profile make_incremental_current_profile(const IncrementalTest& test) {
    if (!(test.pulse_current > 0.0 && test.pulse_duration > 0.0 && test.rest_duration > 0.0 &&
          test.dt > 0.0 && test.n_pulses > 0 && test.initial_rest >= 0.0))
        throw DomainError("incremental current profile: arguments must be positive");
    const auto samples = [&](double duration) {
        return static_cast<std::size_t>(std::llround(duration / test.dt));
    };
    std::vector<double> current;
    current.insert(current.end(), samples(test.initial_rest), 0.0);
    for (std::size_t p = 0; p < test.n_pulses; ++p) {
        current.insert(current.end(), samples(test.pulse_duration), test.pulse_current);
        current.insert(current.end(), samples(test.rest_duration), 0.0);
    }
    return Profile::uniform(std::move(current), test.dt);
}

Profile make_incremental_current_profile(double pulse_current, double pulse_duration,
                                         double rest_duration, std::size_t n_pulses, double dt) {
    return make_incremental_current_profile(IncrementalTest{pulse_current, pulse_duration,
                                                            rest_duration, n_pulses, dt, 0.0});
}

std::vector<double> predict_voltage(const EcmParams& params, const Profile& profile,
                                    const CellState& initial) {
    return simulate_voltage(params, initial, profile);
}

void LmOptions::validate() const {
    if (!(initial_damping > 0.0 && damping_up > 1.0 && damping_down > 1.0 && max_damping > 0.0 &&
          gradient_tolerance > 0.0 && step_tolerance > 0.0 && fd_step > 0.0))
        throw DomainError("lm options: tolerances and damping factors must be positive");
    if (max_iterations < 1) throw DomainError("lm options: max_iterations must be at least 1");
    const auto& b = lower_bounds;
    if (!(b.r0 > 0 && b.r1 > 0 && b.c1 > 0 && b.r2 > 0 && b.c2 > 0))
        throw DomainError("lm options: lower bounds must be positive");
}

PassiveComponents canonical_order(const PassiveComponents& p) {
    if (p.tau1() <= p.tau2()) return p;
    return {p.r0, p.r2, p.c2, p.r1, p.c1};
}

FitReport fit_passive_components(const Profile& profile, const OcvTable& ocv, double q_max,
                                 const PassiveComponents& init, const LmOptions& opts,
                                 std::optional<double> initial_soc) {
    opts.validate();
    profile.validate();
    if (!profile.has_voltage()) throw FitError("fit: profile has no voltage column");
    if (profile.empty()) throw FitError("fit: empty profile");
    if (!(q_max > 0.0)) throw FitError("fit: q_max must be positive");
    if (!(init.r0 > 0 && init.r1 > 0 && init.c1 > 0 && init.r2 > 0 && init.c2 > 0))
        throw FitError("fit: initial guess must be strictly positive");

    CellState start;
    if (initial_soc) {
        if (!(*initial_soc >= 0.0 && *initial_soc <= 1.0)) throw FitError("fit: initial SoC outside [0, 1]");
        start.z = *initial_soc;
    } else {
        if (profile.current.front() != 0.0)
            throw FitError("fit: profile must begin at rest unless an initial SoC is given");
        start.z = ocv.inverse(profile.voltage->front());
    }

    const std::size_t n = profile.size();
    const Eigen::Map<const Eigen::VectorXd> measured(profile.voltage->data(), static_cast<Eigen::Index>(n));
    EcmParams model{.r0 = 1, .r1 = 1, .c1 = 1, .r2 = 1, .c2 = 1, .q_max = q_max, .ocv = ocv};

    const Theta lower = to_log(opts.lower_bounds);
    auto residual = [&](const Theta& theta) {
        const auto v = simulate_voltage(model.with_passive(from_log(theta)), start, profile);
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(n)) - measured);
    };

    Theta theta = to_log(init).cwiseMax(lower);
    Eigen::VectorXd r = residual(theta);
    double rss = r.squaredNorm();

    FitReport report;
    report.objective_trace.push_back(rss);
    double lambda = opts.initial_damping;
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), 5);
    bool small_step = false;

    for (;;) {
        for (int j = 0; j < 5; ++j) {
            Theta probe = theta;
            probe(j) += opts.fd_step;
            jac.col(j) = (residual(probe) - r) / opts.fd_step;
        }
        const Theta g = jac.transpose() * r;
        report.gradient_norm = g.cwiseAbs().maxCoeff();
        if (report.gradient_norm <= opts.gradient_tolerance) {
            report.converged = true;
            break;
        }
        if (small_step || report.iterations >= opts.max_iterations) break;
        ++report.iterations;

        const Eigen::Matrix<double, 5, 5> jtj = jac.transpose() * jac;
        const Theta diag = jtj.diagonal().cwiseMax(1e-12 * jtj.diagonal().maxCoeff());
        bool accepted = false;
        while (!accepted) {
            Eigen::Matrix<double, 5, 5> damped = jtj;
            damped.diagonal() += lambda * diag;
            const Theta delta = damped.ldlt().solve(-g);
            if (delta.allFinite()) {
                const Theta candidate = (theta + delta).cwiseMax(lower);
                Eigen::VectorXd rc = residual(candidate);
                const double rss_c = rc.squaredNorm();
                if (std::isfinite(rss_c) && rss_c < rss) {
                    const Theta step = candidate - theta;
                    small_step = step.norm() <= opts.step_tolerance * (theta.norm() + opts.step_tolerance);
                    theta = candidate;
                    r = std::move(rc);
                    rss = rss_c;
                    report.objective_trace.push_back(rss);
                    lambda = std::max(lambda / opts.damping_down, 1e-300);
                    accepted = true;
                    continue;
                }
            }
            lambda *= opts.damping_up;
            if (lambda > opts.max_damping) break;
        }
        if (!accepted) break;  // damping overflow
    }

    report.params = canonical_order(from_log(theta));
    report.final_rss = rss;
    return report;
}

}  // namespace socest
