// socest: command-line front end for simulation, characterization,
// estimation and Monte Carlo benchmarking.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "socest/bench.hpp"
#include "socest/ecm.hpp"
#include "socest/errors.hpp"
#include "socest/filters.hpp"
#include "socest/fitting.hpp"
#include "socest/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace socest;

namespace {

void emit_manifest(const fs::path& out, const json& config, std::uint64_t seed,
                   const std::vector<std::string>& inputs) {
    RunManifest m;
    m.tool_version = SOCEST_VERSION;
    m.config = config;
    m.master_seed = seed;
    for (const auto& p : inputs) m.input_digests[p] = sha256_file(p);
    write_text_file(out.string() + ".manifest.json", manifest_to_json(m).dump(2) + "\n");
}

// Accepts either a full params document or one holding only "ocv".
struct OcvSource {
    OcvTable table;
    std::optional<double> q_max;
};

OcvSource read_ocv_source(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("ocv")) throw ValidationError("ocv: missing field in " + path.string());
    if (j.contains("r0")) {
        EcmParams p = params_from_json(j);
        return {p.ocv, p.q_max};
    }
    return {ocv_from_json(j.at("ocv")), std::nullopt};
}

PassiveComponents parse_components(const std::vector<double>& v) {
    if (v.size() != 5) throw DomainError("--init expects 5 values: r0,r1,c1,r2,c2");
    return {v[0], v[1], v[2], v[3], v[4]};
}

std::string join(const std::vector<double>& v) {
    std::ostringstream os;
    for (std::size_t k = 0; k < v.size(); ++k) os << (k ? "," : "") << format_double(v[k]);
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Battery state-of-charge estimation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(SOCEST_VERSION));

    // default-params
    auto* dp = app.add_subcommand("default-params", "Write the built-in demonstration cell as a params document");
    std::string dp_out;
    double dp_spacing = kDefaultOcvSpacing;
    dp->add_option("--out", dp_out, "Output params document")->required();
    dp->add_option("--spacing", dp_spacing, "OCV grid spacing")->capture_default_str();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate the cell model over a current profile");
    std::string sim_params, sim_profile, sim_out, sim_measured;
    double sim_z0 = 0.5, sim_ivar = 0.0, sim_vvar = 0.0;
    std::uint64_t sim_seed = 1;
    sim->add_option("--params", sim_params, "Cell parameter document (JSON)")->required()->check(CLI::ExistingFile);
    sim->add_option("--profile", sim_profile, "Profile CSV (t,i[,v]); v is ignored")->required()->check(CLI::ExistingFile);
    sim->add_option("--out", sim_out, "Trajectory CSV (t,i,v,z,v_r1,v_r2)")->required();
    sim->add_option("--initial-soc", sim_z0, "Initial SoC fraction")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    sim->add_option("--measured", sim_measured, "Also write a noisy measured profile CSV (t,i,v)");
    sim->add_option("--current-noise-var", sim_ivar, "Current noise variance, A^2")->capture_default_str();
    sim->add_option("--voltage-noise-var", sim_vvar, "Voltage noise variance, V^2")->capture_default_str();
    sim->add_option("--seed", sim_seed, "Noise seed")->capture_default_str();

    // make-profile
    auto* mk = app.add_subcommand("make-profile", "Generate a synthetic current profile");
    std::string mk_kind = "drive", mk_out;
    double mk_duration = 7200.0, mk_dt = kDefaultDt, mk_c_rate = 1.0, mk_capacity = 5.0;
    double mk_pulse_i = 1.0, mk_pulse_s = 360.0, mk_rest_s = 1800.0, mk_lead = 60.0;
    std::size_t mk_pulses = 10;
    std::uint64_t mk_seed = 1;
    mk->add_option("--kind", mk_kind, "drive or incremental")->capture_default_str()->check(CLI::IsMember({"drive", "incremental"}));
    mk->add_option("--out", mk_out, "Profile CSV (t,i)")->required();
    mk->add_option("--dt", mk_dt, "Sample interval, s")->capture_default_str();
    mk->add_option("--duration", mk_duration, "drive: duration, s")->capture_default_str();
    mk->add_option("--max-c-rate", mk_c_rate, "drive: current cap as C-rate")->capture_default_str();
    mk->add_option("--capacity-ah", mk_capacity, "drive: cell capacity, Ah")->capture_default_str();
    mk->add_option("--seed", mk_seed, "drive: seed")->capture_default_str();
    mk->add_option("--pulse-current", mk_pulse_i, "incremental: pulse current, A")->capture_default_str();
    mk->add_option("--pulse-duration", mk_pulse_s, "incremental: pulse length, s")->capture_default_str();
    mk->add_option("--rest-duration", mk_rest_s, "incremental: rest length, s")->capture_default_str();
    mk->add_option("--pulses", mk_pulses, "incremental: number of pulses")->capture_default_str();
    mk->add_option("--initial-rest", mk_lead, "incremental: lead-in rest, s")->capture_default_str();

    // fit-ocv
    auto* focv = app.add_subcommand("fit-ocv", "Build the OCV-SoC table from low-current sweeps");
    std::string focv_dis, focv_chg, focv_out, focv_params;
    double focv_spacing = kDefaultOcvSpacing;
    focv->add_option("--discharge", focv_dis, "Low-current discharge profile CSV (t,i,v), full to empty")->required()->check(CLI::ExistingFile);
    focv->add_option("--charge", focv_chg, "Low-current charge profile CSV (t,i,v), empty to full")->required()->check(CLI::ExistingFile);
    focv->add_option("--spacing", focv_spacing, "SoC grid spacing")->capture_default_str();
    focv->add_option("--params", focv_params, "Existing params document to receive the table")->check(CLI::ExistingFile);
    focv->add_option("--out", focv_out, "Output document (params, or {\"ocv\": ...} without --params)")->required();

    // fit-params
    auto* fpar = app.add_subcommand("fit-params", "Fit R0, R1, C1, R2, C2 to an incremental-current test");
    std::string fpar_profile, fpar_ocv, fpar_out, fpar_report;
    std::optional<double> fpar_qmax, fpar_z0;
    std::vector<double> fpar_init;
    std::size_t fpar_iters = 200;
    fpar->add_option("--profile", fpar_profile, "Measured profile CSV (t,i,v)")->required()->check(CLI::ExistingFile);
    fpar->add_option("--ocv", fpar_ocv, "Document with the OCV table (params or ocv-only)")->required()->check(CLI::ExistingFile);
    fpar->add_option("--q-max", fpar_qmax, "Capacity, C (defaults to the document's q_max)");
    fpar->add_option("--init", fpar_init, "Initial guess r0,r1,c1,r2,c2")->required()->delimiter(',')->expected(5);
    fpar->add_option("--initial-soc", fpar_z0, "Initial SoC (default: OCV inverse of the first rest sample)");
    fpar->add_option("--max-iterations", fpar_iters, "LM iteration cap")->capture_default_str();
    fpar->add_option("--out", fpar_out, "Output params document")->required();
    fpar->add_option("--report", fpar_report, "Fit report JSON")->required();

    // estimate
    auto* est = app.add_subcommand("estimate", "Run an SoC estimator over a measured profile");
    std::string est_params, est_profile, est_kind = "aekf-mle", est_truth, est_out;
    std::size_t est_window = 128;
    std::optional<double> est_z0;
    est->add_option("--params", est_params, "Cell parameter document (JSON)")->required()->check(CLI::ExistingFile);
    est->add_option("--profile", est_profile, "Measured profile CSV (t,i,v)")->required()->check(CLI::ExistingFile);
    est->add_option("--kind", est_kind, "cc, ekf, aekf-mle or aekf-cm")->capture_default_str()->check(CLI::IsMember({"cc", "ekf", "aekf-mle", "aekf-cm"}));
    est->add_option("--window", est_window, "Adaptation window N")->capture_default_str()->check(CLI::PositiveNumber);
    est->add_option("--initial-soc", est_z0, "Initial SoC estimate (default: OCV inverse of the first voltage)");
    est->add_option("--truth", est_truth, "Trajectory CSV providing z_true")->check(CLI::ExistingFile);
    est->add_option("--out", est_out, "Output CSV (t,z_est[,z_true])")->required();

    // benchmark / sweep-window
    auto* bm = app.add_subcommand("benchmark", "Monte Carlo sweep over one axis");
    auto* sw = app.add_subcommand("sweep-window", "Monte Carlo sweep over the adaptation window size");
    std::string bm_axis = "window_size", bm_out;
    std::vector<double> bm_values;
    std::size_t bm_trials = 50, bm_threads = 0;
    std::uint64_t bm_seed = 2024;
    double bm_duration = 7200.0, bm_param_err = 0.0;
    for (auto* sc : {bm, sw}) {
        sc->add_option("--values", bm_values, "Axis values, comma separated")->delimiter(',');
        sc->add_option("--trials", bm_trials, "Trials per axis value")->capture_default_str()->check(CLI::PositiveNumber);
        sc->add_option("--seed", bm_seed, "Master seed")->capture_default_str();
        sc->add_option("--duration", bm_duration, "Drive profile duration, s")->capture_default_str();
        sc->add_option("--parameter-error", bm_param_err, "Filter parameter error off the parameter axis, %")->capture_default_str();
        sc->add_option("--threads", bm_threads, "Worker threads (0 = all cores)")->capture_default_str();
        sc->add_option("--out", bm_out, "Tidy CSV (axis_value,estimator,mae_mean,ci_lo,ci_hi)")->required();
    }
    bm->add_option("--axis", bm_axis, "window_size, noise_power or parameter_error")->capture_default_str()
        ->check(CLI::IsMember({"window_size", "noise_power", "parameter_error"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "socest: " << e.what() << " (see --help)\n";
        return 2;
    }

    try {
        if (*dp) {
            EcmParams p = default_cell();
            p.ocv = default_ocv_table(dp_spacing);
            write_params(fs::path(dp_out), p);
            emit_manifest(dp_out, {{"command", "default-params"}, {"spacing", dp_spacing}}, 0, {});
        } else if (*sim) {
            const EcmParams params = read_params_file(sim_params);
            const Profile profile = read_profile(fs::path(sim_profile));
            const CellState init{sim_z0, 0.0, 0.0, false};
            const auto points = simulate(params, init, profile);
            const Trajectory traj = make_trajectory(profile, points);
            write_trajectory(fs::path(sim_out), traj);
            if (!sim_measured.empty()) {
                const NoiseSpec noise{sim_ivar, sim_vvar, sim_seed};
                write_profile(fs::path(sim_measured), add_measurement_noise(traj.profile, noise));
            }
            emit_manifest(sim_out,
                          {{"command", "simulate"}, {"params", sim_params}, {"profile", sim_profile},
                           {"initial_soc", sim_z0}, {"measured", sim_measured},
                           {"current_noise_var", sim_ivar}, {"voltage_noise_var", sim_vvar}},
                          sim_seed, {sim_params, sim_profile});
        } else if (*mk) {
            Profile p;
            json cfg{{"command", "make-profile"}, {"kind", mk_kind}, {"dt", mk_dt}};
            if (mk_kind == "drive") {
                p = make_drive_profile(mk_duration, mk_dt, mk_seed, {mk_c_rate, mk_capacity});
                cfg.update({{"duration", mk_duration}, {"max_c_rate", mk_c_rate}, {"capacity_ah", mk_capacity}});
            } else {
                p = make_incremental_current_profile(
                    IncrementalTest{mk_pulse_i, mk_pulse_s, mk_rest_s, mk_pulses, mk_dt, mk_lead});
                cfg.update({{"pulse_current", mk_pulse_i}, {"pulse_duration", mk_pulse_s},
                            {"rest_duration", mk_rest_s}, {"pulses", mk_pulses}, {"initial_rest", mk_lead}});
            }
            write_profile(fs::path(mk_out), p);
            emit_manifest(mk_out, cfg, mk_seed, {});
        } else if (*focv) {
            const Profile dis = read_profile(fs::path(focv_dis));
            const Profile chg = read_profile(fs::path(focv_chg));
            const OcvTable table = build_ocv_table(sweep_from_profiles(dis, chg), focv_spacing);
            std::vector<std::string> inputs{focv_dis, focv_chg};
            if (!focv_params.empty()) {
                EcmParams p = read_params_file(focv_params);
                p.ocv = table;
                write_params(fs::path(focv_out), p);
                inputs.push_back(focv_params);
            } else {
                write_text_file(focv_out, json{{"ocv", ocv_to_json(table)}}.dump(2) + "\n");
            }
            emit_manifest(focv_out,
                          {{"command", "fit-ocv"}, {"discharge", focv_dis}, {"charge", focv_chg},
                           {"spacing", focv_spacing}, {"params", focv_params}},
                          0, inputs);
        } else if (*fpar) {
            const Profile profile = read_profile(fs::path(fpar_profile));
            const OcvSource src = read_ocv_source(fpar_ocv);
            const std::optional<double> q = fpar_qmax ? fpar_qmax : src.q_max;
            if (!q) throw DomainError("fit-params: --q-max is required when the OCV document has no q_max");
            LmOptions opts;
            opts.max_iterations = fpar_iters;
            const FitReport report =
                fit_passive_components(profile, src.table, *q, parse_components(fpar_init), opts, fpar_z0);
            EcmParams fitted{.q_max = *q, .ocv = src.table};
            fitted = fitted.with_passive(report.params);
            write_params(fs::path(fpar_out), fitted);
            write_text_file(fpar_report, fit_report_to_json(report).dump(2) + "\n");
            json cfg{{"command", "fit-params"}, {"profile", fpar_profile}, {"ocv", fpar_ocv}, {"q_max", *q},
                     {"init", fpar_init}, {"max_iterations", fpar_iters}};
            if (fpar_z0) cfg["initial_soc"] = *fpar_z0;
            emit_manifest(fpar_out, cfg, 0, {fpar_profile, fpar_ocv});
        } else if (*est) {
            const EcmParams params = read_params_file(est_params);
            const Profile profile = read_profile(fs::path(est_profile));
            const EstimatorKind kind = parse_estimator_kind(est_kind);
            if (kind != EstimatorKind::CoulombCounting && !profile.has_voltage())
                throw DomainError("estimate: profile has no voltage column");
            double z0 = 0.0;
            if (est_z0) z0 = *est_z0;
            else if (profile.has_voltage()) z0 = params.ocv.inverse(profile.voltage->front());
            else throw DomainError("estimate: --initial-soc is required without a voltage column");

            EstimatorOptions opts;
            opts.window = est_window;
            const auto z = estimator_run(kind, params, profile, CellState{z0, 0.0, 0.0, false}, opts);

            std::optional<Trajectory> truth;
            if (!est_truth.empty()) {
                truth = read_trajectory(fs::path(est_truth));
                if (truth->states.size() != z.size())
                    throw DomainError("estimate: truth trajectory length differs from the profile");
            }
            std::ostringstream os;
            os << (truth ? "t,z_est,z_true\n" : "t,z_est\n");
            for (std::size_t k = 0; k < z.size(); ++k) {
                os << format_double(profile.t[k]) << ',' << format_double(z[k]);
                if (truth) os << ',' << format_double(truth->states[k].z);
                os << '\n';
            }
            write_text_file(est_out, os.str());
            std::vector<std::string> inputs{est_params, est_profile};
            if (truth) inputs.push_back(est_truth);
            emit_manifest(est_out,
                          {{"command", "estimate"}, {"params", est_params}, {"profile", est_profile},
                           {"kind", est_kind}, {"window", est_window}, {"initial_soc", z0}, {"truth", est_truth}},
                          0, inputs);
        } else if (*bm || *sw) {
            SweepSpec spec;
            spec.axis = *sw ? SweepAxis::WindowSize : parse_sweep_axis(bm_axis);
            spec.n_trials = bm_trials;
            if (bm_values.empty()) {
                switch (spec.axis) {
                    case SweepAxis::WindowSize: bm_values = {16, 32, 64, 128, 256, 512, 1024}; break;
                    case SweepAxis::NoisePower: bm_values = {-7, -6, -5, -4, -3}; break;
                    case SweepAxis::ParameterError: bm_values = {-20, -10, 0, 10, 20}; break;
                }
            }
            spec.axis_values = bm_values;
            BenchConfig cfg;
            cfg.master_seed = bm_seed;
            cfg.duration = bm_duration;
            cfg.parameter_error = bm_param_err;
            cfg.threads = bm_threads;
            const BenchResult result = run_sweep(spec, cfg);
            write_bench_csv(fs::path(bm_out), result);
            emit_manifest(bm_out,
                          {{"command", *sw ? "sweep-window" : "benchmark"}, {"axis", to_string(spec.axis)},
                           {"values", join(bm_values)}, {"trials", bm_trials}, {"duration", bm_duration},
                           {"parameter_error", bm_param_err},
                           {"base_noise", {{"current_noise_var", spec.base_noise.current_noise_var},
                                           {"voltage_noise_var", spec.base_noise.voltage_noise_var}}},
                           {"initial_soc", cfg.initial_soc}, {"initial_soc_error", cfg.initial_soc_error},
                           {"window", cfg.window}},
                          bm_seed, {});
        }
    } catch (const std::exception& e) {
        std::cerr << "socest: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
