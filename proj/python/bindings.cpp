#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <stdexcept>

#include "socest/bench.hpp"
#include "socest/errors.hpp"
#include "socest/filters.hpp"
#include "socest/fitting.hpp"
#include "socest/io.hpp"

namespace py = pybind11;
using namespace socest;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const Array& a) {
    if (a.ndim() != 1) throw DomainError("expected a one-dimensional array");
    return {a.data(), a.data() + a.size()};
}

Array to_array(const std::vector<double>& v) { return Array(static_cast<py::ssize_t>(v.size()), v.data()); }

Profile make_profile(const Array& t, const Array& current, const std::optional<Array>& voltage) {
    Profile p;
    p.t = to_vec(t);
    p.current = to_vec(current);
    if (voltage) p.voltage = to_vec(*voltage);
    p.validate();
    return p;
}

py::tuple profile_tuple(const Profile& p) {
    return py::make_tuple(to_array(p.t), to_array(p.current));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Battery state-of-charge estimation core";
    m.attr("__version__") = SOCEST_VERSION;

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<FitError>(m, "FitError", base.ptr());
    py::register_exception<NumericalFault>(m, "NumericalFault", base.ptr());

    py::class_<OcvTable>(m, "OcvTable")
        .def(py::init<std::vector<double>, std::vector<double>>(), py::arg("soc_grid"), py::arg("ocv_values"))
        .def_property_readonly("soc_grid", &OcvTable::soc_grid)
        .def_property_readonly("ocv_values", &OcvTable::ocv_values)
        .def("lookup", &OcvTable::lookup, py::arg("z"))
        .def("derivative", &OcvTable::derivative, py::arg("z"))
        .def("inverse", &OcvTable::inverse, py::arg("v"))
        .def("__len__", &OcvTable::size);
    m.def("default_ocv_table", &default_ocv_table, py::arg("spacing") = kDefaultOcvSpacing);

    py::class_<EcmParams>(m, "EcmParams")
        .def(py::init([](double r0, double r1, double c1, double r2, double c2, double q_max, OcvTable ocv) {
                 EcmParams p{r0, r1, c1, r2, c2, q_max, std::move(ocv)};
                 p.validate();
                 return p;
             }),
             py::arg("r0"), py::arg("r1"), py::arg("c1"), py::arg("r2"), py::arg("c2"), py::arg("q_max"),
             py::arg("ocv"))
        .def_readwrite("r0", &EcmParams::r0)
        .def_readwrite("r1", &EcmParams::r1)
        .def_readwrite("c1", &EcmParams::c1)
        .def_readwrite("r2", &EcmParams::r2)
        .def_readwrite("c2", &EcmParams::c2)
        .def_readwrite("q_max", &EcmParams::q_max)
        .def_readwrite("ocv", &EcmParams::ocv)
        .def("validate", &EcmParams::validate)
        .def("to_json", [](const EcmParams& p) { return write_params(p); })
        .def_static("from_json", [](const std::string& s) { return read_params(s); }, py::arg("document"));
    m.def("default_cell", &default_cell);

    m.def(
        "simulate",
        [](const EcmParams& params, const Array& t, const Array& current, double initial_soc) {
            Profile p = make_profile(t, current, std::nullopt);
            const auto points = simulate(params, {initial_soc, 0.0, 0.0, false}, p);
            std::vector<double> v, z, v1, v2;
            for (const auto& pt : points) {
                v.push_back(pt.voltage);
                z.push_back(pt.state.z);
                v1.push_back(pt.state.v_r1);
                v2.push_back(pt.state.v_r2);
            }
            py::dict out;
            out["v"] = to_array(v);
            out["z"] = to_array(z);
            out["v_r1"] = to_array(v1);
            out["v_r2"] = to_array(v2);
            return out;
        },
        py::arg("params"), py::arg("t"), py::arg("current"), py::arg("initial_soc"),
        "Simulate the cell; returns arrays v, z, v_r1, v_r2.");

    m.def(
        "estimate",
        [](const std::string& kind, const EcmParams& params, const Array& t, const Array& current,
           std::optional<Array> voltage, double initial_soc, std::size_t window) {
            const Profile p = make_profile(t, current, voltage);
            EstimatorOptions opts;
            opts.window = window;
            py::gil_scoped_release release;
            auto z = estimator_run(parse_estimator_kind(kind), params, p, {initial_soc, 0.0, 0.0, false}, opts);
            py::gil_scoped_acquire acquire;
            return to_array(z);
        },
        py::arg("kind"), py::arg("params"), py::arg("t"), py::arg("current"), py::arg("voltage") = py::none(),
        py::arg("initial_soc"), py::arg("window") = 128,
        "Run cc, ekf, aekf-mle or aekf-cm; returns the SoC estimate per sample.");

    m.def(
        "fit_passive_components",
        [](const Array& t, const Array& current, const Array& voltage, const OcvTable& ocv, double q_max,
           const std::vector<double>& init, std::size_t max_iterations, std::optional<double> initial_soc) {
            if (init.size() != 5) throw DomainError("init expects r0, r1, c1, r2, c2");
            const Profile p = make_profile(t, current, voltage);
            LmOptions opts;
            opts.max_iterations = max_iterations;
            const FitReport rep = fit_passive_components(p, ocv, q_max, {init[0], init[1], init[2], init[3], init[4]},
                                                         opts, initial_soc);
            py::dict out;
            out["params"] = py::dict(py::arg("r0") = rep.params.r0, py::arg("r1") = rep.params.r1,
                                     py::arg("c1") = rep.params.c1, py::arg("r2") = rep.params.r2,
                                     py::arg("c2") = rep.params.c2);
            out["final_rss"] = rep.final_rss;
            out["iterations"] = rep.iterations;
            out["converged"] = rep.converged;
            out["gradient_norm"] = rep.gradient_norm;
            out["objective_trace"] = rep.objective_trace;
            return out;
        },
        py::arg("t"), py::arg("current"), py::arg("voltage"), py::arg("ocv"), py::arg("q_max"), py::arg("init"),
        py::arg("max_iterations") = 200, py::arg("initial_soc") = py::none());

    m.def(
        "build_ocv_table",
        [](const Array& charge_z, const Array& charge_v, const Array& discharge_z, const Array& discharge_v,
           double spacing) {
            OcvSweep s;
            const auto cz = to_vec(charge_z), cv = to_vec(charge_v), dz = to_vec(discharge_z), dv = to_vec(discharge_v);
            if (cz.size() != cv.size() || dz.size() != dv.size()) throw DomainError("curve arrays differ in length");
            for (std::size_t k = 0; k < cz.size(); ++k) s.charge_curve.push_back({cz[k], cv[k]});
            for (std::size_t k = 0; k < dz.size(); ++k) s.discharge_curve.push_back({dz[k], dv[k]});
            return build_ocv_table(s, spacing);
        },
        py::arg("charge_z"), py::arg("charge_v"), py::arg("discharge_z"), py::arg("discharge_v"),
        py::arg("spacing") = kDefaultOcvSpacing);

    m.def(
        "make_drive_profile",
        [](double duration, double dt, std::uint64_t seed, double max_c_rate, double capacity_ah) {
            DriveProfileOptions o;
            o.max_c_rate = max_c_rate;
            o.capacity_ah = capacity_ah;
            return profile_tuple(make_drive_profile(duration, dt, seed, o));
        },
        py::arg("duration"), py::arg("dt") = kDefaultDt, py::arg("seed") = 1, py::arg("max_c_rate") = 1.0,
        py::arg("capacity_ah") = 5.0, "Returns (t, current).");

    m.def(
        "make_incremental_current_profile",
        [](double pulse_current, double pulse_duration, double rest_duration, std::size_t n_pulses, double dt,
           double initial_rest) {
            return profile_tuple(make_incremental_current_profile(
                IncrementalTest{pulse_current, pulse_duration, rest_duration, n_pulses, dt, initial_rest}));
        },
        py::arg("pulse_current"), py::arg("pulse_duration"), py::arg("rest_duration"), py::arg("n_pulses"),
        py::arg("dt") = kDefaultDt, py::arg("initial_rest") = 0.0, "Returns (t, current).");

    m.def(
        "mae", [](const Array& est, const Array& truth) { return mae(to_vec(est), to_vec(truth)); },
        py::arg("estimate"), py::arg("truth"), "Mean absolute error in percent SoC.");

    m.def(
        "run_sweep",
        [](const std::string& axis, const std::vector<double>& values, std::size_t n_trials, std::uint64_t seed,
           double duration, double parameter_error, std::size_t threads) {
            SweepSpec spec;
            spec.axis = parse_sweep_axis(axis);
            spec.axis_values = values;
            spec.n_trials = n_trials;
            BenchConfig cfg;
            cfg.master_seed = seed;
            cfg.duration = duration;
            cfg.parameter_error = parameter_error;
            cfg.threads = threads;
            BenchResult r;
            {
                py::gil_scoped_release release;
                r = run_sweep(spec, cfg);
            }
            py::list rows;
            for (const BenchRow& row : r.rows)
                rows.append(py::dict(py::arg("axis_value") = row.axis_value,
                                     py::arg("estimator") = std::string(to_string(row.estimator)),
                                     py::arg("mae_mean") = row.mae_mean, py::arg("ci_lo") = row.ci_lo,
                                     py::arg("ci_hi") = row.ci_hi));
            return rows;
        },
        py::arg("axis"), py::arg("values"), py::arg("n_trials") = 50, py::arg("seed") = 2024,
        py::arg("duration") = 7200.0, py::arg("parameter_error") = 0.0, py::arg("threads") = 0,
        "Monte Carlo sweep; returns one dict per (axis value, estimator).");
}
