#include "socest/ecm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "socest/errors.hpp"

namespace socest {

namespace {

void require_unit_interval(double z, const char* what) {
    if (!(z >= 0.0 && z <= 1.0)) {
        std::ostringstream os;
        os << what << ": SoC " << z << " outside [0, 1]";
        throw DomainError(os.str());
    }
}

}  // namespace

OcvTable::OcvTable(std::vector<double> soc_grid, std::vector<double> ocv_values)
    : soc_(std::move(soc_grid)), ocv_(std::move(ocv_values)) {
    if (soc_.size() < 2) throw ValidationError("ocv: table needs at least 2 nodes");
    if (soc_.size() != ocv_.size()) throw ValidationError("ocv: soc grid and voltages differ in length");
    if (soc_.front() != 0.0 || soc_.back() != 1.0)
        throw ValidationError("ocv: soc grid must start at 0 and end at 1");
    for (std::size_t k = 1; k < soc_.size(); ++k) {
        if (!(soc_[k] > soc_[k - 1]))
            throw ValidationError("ocv: soc grid not strictly increasing at node " + std::to_string(k));
        if (!(ocv_[k] > ocv_[k - 1]))
            throw ValidationError("ocv: voltages not strictly increasing at node " + std::to_string(k));
    }
    for (double v : ocv_)
        if (!std::isfinite(v)) throw ValidationError("ocv: non-finite voltage");

    const double step = 1.0 / static_cast<double>(soc_.size() - 1);
    bool uniform = true;
    for (std::size_t k = 0; k < soc_.size() && uniform; ++k)
        uniform = std::abs(soc_[k] - static_cast<double>(k) * step) <= 1e-12;
    if (uniform) inv_step_ = static_cast<double>(soc_.size() - 1);
}

OcvTable OcvTable::uniform(std::vector<double> ocv_values) {
    const std::size_t n = ocv_values.size();
    if (n < 2) throw ValidationError("ocv: table needs at least 2 nodes");
    std::vector<double> grid(n);
    for (std::size_t k = 0; k < n; ++k) grid[k] = static_cast<double>(k) / static_cast<double>(n - 1);
    grid.back() = 1.0;
    return OcvTable(std::move(grid), std::move(ocv_values));
}

std::size_t OcvTable::segment(double z) const {
    const std::size_t last = soc_.size() - 2;
    std::size_t j;
    if (inv_step_ > 0.0) {
        j = std::min(static_cast<std::size_t>(z * inv_step_), last);
        // Rounding in z*inv_step_ can land one segment off near a node.
        if (j < last && soc_[j + 1] <= z) ++j;
        else if (j > 0 && soc_[j] > z) --j;
    } else {
        auto it = std::upper_bound(soc_.begin(), soc_.end(), z);
        j = std::min(static_cast<std::size_t>(std::distance(soc_.begin(), it)) - 1, last);
    }
    return j;
}

double OcvTable::lookup(double z) const {
    require_unit_interval(z, "ocv_lookup");
    const std::size_t j = segment(z);
    const double w = (z - soc_[j]) / (soc_[j + 1] - soc_[j]);
    return ocv_[j] + w * (ocv_[j + 1] - ocv_[j]);
}

double OcvTable::derivative(double z) const {
    require_unit_interval(z, "ocv_derivative");
    const std::size_t j = segment(z);
    return (ocv_[j + 1] - ocv_[j]) / (soc_[j + 1] - soc_[j]);
}

double OcvTable::inverse(double v) const {
    if (v <= ocv_.front()) return 0.0;
    if (v >= ocv_.back()) return 1.0;
    auto it = std::upper_bound(ocv_.begin(), ocv_.end(), v);
    const std::size_t j = static_cast<std::size_t>(std::distance(ocv_.begin(), it)) - 1;
    const double w = (v - ocv_[j]) / (ocv_[j + 1] - ocv_[j]);
    return soc_[j] + w * (soc_[j + 1] - soc_[j]);
}

double ocv_lookup(const OcvTable& table, double z) { return table.lookup(z); }
double ocv_derivative(const OcvTable& table, double z) { return table.derivative(z); }
double ocv_inverse(const OcvTable& table, double v) { return table.inverse(v); }

OcvTable default_ocv_table(double spacing) {
    const double nodes = std::round(1.0 / spacing);
    if (!(spacing > 0.0) || std::abs(nodes * spacing - 1.0) > 1e-9)
        throw ValidationError("ocv: spacing must divide 1 evenly");
    const auto n = static_cast<std::size_t>(nodes) + 1;
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double z = static_cast<double>(k) / static_cast<double>(n - 1);
        v[k] = 3.0 + 0.25 * (1.0 - std::exp(-z / 0.04)) + 0.55 * z + 0.35 * z * z * z;
    }
    return OcvTable::uniform(std::move(v));
}

PassiveComponents PassiveComponents::scaled(double factor) const {
    return {r0 * factor, r1 * factor, c1 * factor, r2 * factor, c2 * factor};
}

EcmParams EcmParams::with_passive(const PassiveComponents& p) const {
    EcmParams out = *this;
    out.r0 = p.r0;
    out.r1 = p.r1;
    out.c1 = p.c1;
    out.r2 = p.r2;
    out.c2 = p.c2;
    return out;
}

void EcmParams::validate() const {
    const std::pair<const char*, double> fields[] = {
        {"r0", r0}, {"r1", r1}, {"c1", c1}, {"r2", r2}, {"c2", c2}, {"q_max", q_max}};
    for (const auto& [name, value] : fields) {
        if (!(value > 0.0) || !std::isfinite(value))
            throw ValidationError(std::string(name) + ": must be strictly positive and finite");
    }
    if (!(r1 * c1 > 0.0)) throw ValidationError("r1*c1: time constant must be positive");
    if (!(r2 * c2 > 0.0)) throw ValidationError("r2*c2: time constant must be positive");
}

EcmParams default_cell() {
    return EcmParams{.r0 = 0.025,
                     .r1 = 0.015,
                     .c1 = 2000.0,
                     .r2 = 0.020,
                     .c2 = 30000.0,
                     .q_max = 5.0 * 3600.0,
                     .ocv = default_ocv_table()};
}

void Profile::validate() const {
    if (current.size() != t.size())
        throw ValidationError("profile: current column length differs from timestamps");
    if (voltage && voltage->size() != t.size())
        throw ValidationError("profile: voltage column length differs from timestamps");
    for (std::size_t k = 1; k < t.size(); ++k) {
        if (!(t[k] > t[k - 1]))
            throw ValidationError("profile: timestamps not strictly increasing at sample " +
                                  std::to_string(k));
    }
}

Profile Profile::uniform(std::vector<double> current, double dt, double t0) {
    if (!(dt > 0.0)) throw DomainError("profile: dt must be positive");
    Profile p;
    p.t.resize(current.size());
    for (std::size_t k = 0; k < current.size(); ++k) p.t[k] = t0 + static_cast<double>(k) * dt;
    p.current = std::move(current);
    return p;
}

double clamp_soc(double z, bool* saturated) {
    const double c = std::clamp(z, 0.0, 1.0);
    if (saturated) *saturated = (c != z);
    return c;
}

CellState ecm_step(const EcmParams& params, const CellState& state, double i, double dt) {
    if (!(dt > 0.0)) throw DomainError("ecm_step: dt must be positive");
    const double a1 = std::exp(-dt / (params.r1 * params.c1));
    const double a2 = std::exp(-dt / (params.r2 * params.c2));
    CellState next;
    next.z = clamp_soc(state.z + dt / params.q_max * i, &next.saturated);
    next.v_r1 = a1 * state.v_r1 + params.r1 * (1.0 - a1) * i;
    next.v_r2 = a2 * state.v_r2 + params.r2 * (1.0 - a2) * i;
    return next;
}

double terminal_voltage(const EcmParams& params, const CellState& state, double i) {
    return params.ocv.lookup(state.z) + params.r0 * i + state.v_r1 + state.v_r2;
}

std::vector<TrajectoryPoint> simulate(const EcmParams& params, const CellState& initial,
                                      const Profile& profile, double first_dt) {
    if (profile.empty()) throw DomainError("simulate: empty profile");
    std::vector<TrajectoryPoint> out;
    out.reserve(profile.size());
    CellState s = initial;
    for (std::size_t k = 0; k < profile.size(); ++k) {
        const double i = profile.current[k];
        s = ecm_step(params, s, i, profile.dt(k, first_dt));
        out.push_back({s, terminal_voltage(params, s, i)});
    }
    return out;
}

std::vector<double> simulate_voltage(const EcmParams& params, const CellState& initial,
                                     const Profile& profile, double first_dt) {
    if (profile.empty()) throw DomainError("simulate: empty profile");
    std::vector<double> out(profile.size());
    CellState s = initial;
    // Decay factors are recomputed only when the step length changes.
    double last_dt = -1.0, a1 = 0.0, a2 = 0.0;
    for (std::size_t k = 0; k < profile.size(); ++k) {
        const double dt = profile.dt(k, first_dt);
        if (!(dt > 0.0)) throw DomainError("ecm_step: dt must be positive");
        if (dt != last_dt) {
            a1 = std::exp(-dt / (params.r1 * params.c1));
            a2 = std::exp(-dt / (params.r2 * params.c2));
            last_dt = dt;
        }
        const double i = profile.current[k];
        s.z = clamp_soc(s.z + dt / params.q_max * i);
        s.v_r1 = a1 * s.v_r1 + params.r1 * (1.0 - a1) * i;
        s.v_r2 = a2 * s.v_r2 + params.r2 * (1.0 - a2) * i;
        out[k] = terminal_voltage(params, s, i);
    }
    return out;
}

}  // namespace socest
