#pragma once

// Second-order (improved Thevenin) equivalent circuit model of a cell:
// OCV source, series R0 and two RC branches. The same dynamics drive the
// simulator that produces ground truth and the estimators' internal model.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace socest {

inline constexpr double kDefaultDt = 1.0;        // seconds
inline constexpr double kDefaultOcvSpacing = 0.02;

// Piecewise-linear OCV(SoC) curve on a strictly increasing grid that spans
// [0, 1]. Voltages must also be strictly increasing so the curve can be
// inverted.
class OcvTable {
public:
    OcvTable(std::vector<double> soc_grid, std::vector<double> ocv_values);

    // Uniform grid {0, 1/(n-1), ..., 1} carrying the given voltages.
    static OcvTable uniform(std::vector<double> ocv_values);

    const std::vector<double>& soc_grid() const { return soc_; }
    const std::vector<double>& ocv_values() const { return ocv_; }
    std::size_t size() const { return soc_.size(); }

    // Throw DomainError for z outside [0, 1].
    double lookup(double z) const;
    // Right-segment slope at interior nodes, last-segment slope at z = 1.
    double derivative(double z) const;
    // SoC whose OCV equals v; saturates at 0 / 1 outside the table range.
    double inverse(double v) const;

    friend bool operator==(const OcvTable&, const OcvTable&) = default;

private:
    std::size_t segment(double z) const;

    std::vector<double> soc_;
    std::vector<double> ocv_;
    double inv_step_ = 0.0;  // 1/spacing for uniform grids, 0 otherwise
};

double ocv_lookup(const OcvTable& table, double z);
double ocv_derivative(const OcvTable& table, double z);
double ocv_inverse(const OcvTable& table, double v);

// Smooth, monotone curve for a generic lithium-ion cell (3.0 V empty,
// 4.15 V full) sampled at the given spacing. Used by fixtures and the
// benchmark harness.
OcvTable default_ocv_table(double spacing = kDefaultOcvSpacing);

struct PassiveComponents {
    double r0 = 0.0;  // ohm
    double r1 = 0.0;  // ohm
    double c1 = 0.0;  // farad
    double r2 = 0.0;  // ohm
    double c2 = 0.0;  // farad

    double tau1() const { return r1 * c1; }
    double tau2() const { return r2 * c2; }
    // Multiplies every component by `factor`.
    PassiveComponents scaled(double factor) const;

    friend bool operator==(const PassiveComponents&, const PassiveComponents&) = default;
};

struct EcmParams {
    double r0 = 0.0;
    double r1 = 0.0;
    double c1 = 0.0;
    double r2 = 0.0;
    double c2 = 0.0;
    double q_max = 0.0;  // coulomb
    OcvTable ocv;

    PassiveComponents passive() const { return {r0, r1, c1, r2, c2}; }
    double tau1() const { return r1 * c1; }
    double tau2() const { return r2 * c2; }
    EcmParams with_passive(const PassiveComponents& p) const;

    // Throws ValidationError naming the first offending field.
    void validate() const;

    friend bool operator==(const EcmParams&, const EcmParams&) = default;
};

// 5 Ah cell with tau1 = 30 s and tau2 = 600 s on default_ocv_table().
EcmParams default_cell();

struct CellState {
    double z = 0.0;     // SoC fraction
    double v_r1 = 0.0;  // volt
    double v_r2 = 0.0;  // volt
    bool saturated = false;  // z was clamped into [0, 1] by the last step

    friend bool operator==(const CellState&, const CellState&) = default;
};

// Timestamped current (positive charges the cell) and optional voltage.
struct Profile {
    std::vector<double> t;
    std::vector<double> current;
    std::optional<std::vector<double>> voltage;

    std::size_t size() const { return t.size(); }
    bool empty() const { return t.empty(); }
    bool has_voltage() const { return voltage.has_value(); }

    // Step length preceding sample k; sample 0 uses `first_dt`.
    double dt(std::size_t k, double first_dt = kDefaultDt) const {
        return k == 0 ? first_dt : t[k] - t[k - 1];
    }

    void validate() const;

    // Samples at t0, t0+dt, ... for the given current sequence.
    static Profile uniform(std::vector<double> current, double dt = kDefaultDt, double t0 = 0.0);

    friend bool operator==(const Profile&, const Profile&) = default;
};

double clamp_soc(double z, bool* saturated = nullptr);

// One step of the discrete-time dynamics: Coulomb counting on z and exact
// exponential discretization of both RC branches under constant current.
CellState ecm_step(const EcmParams& params, const CellState& state, double i, double dt);

// OCV(z) + R0*i + V_R1 + V_R2.
double terminal_voltage(const EcmParams& params, const CellState& state, double i);

struct TrajectoryPoint {
    CellState state;
    double voltage = 0.0;
};

// Sample k applies current i_k over the interval ending at t_k, then reports
// the terminal voltage at t_k. The first interval has length `first_dt`.
std::vector<TrajectoryPoint> simulate(const EcmParams& params, const CellState& initial,
                                      const Profile& profile, double first_dt = kDefaultDt);

// Same as simulate() but only the terminal voltages; the residual generator
// for passive-component fitting.
std::vector<double> simulate_voltage(const EcmParams& params, const CellState& initial,
                                     const Profile& profile, double first_dt = kDefaultDt);

}  // namespace socest
