#include "socest/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#if defined(__SSE2__) || defined(_M_X64)
#include <xmmintrin.h>
#define SOCEST_HAVE_MXCSR 1
#endif

#include "socest/errors.hpp"

namespace socest {

LinearizedModel LinearizedModel::from_params(const EcmParams& params, double dt) {
    if (!(dt > 0.0)) throw DomainError("linearized model: dt must be positive");
    const double a2 = std::exp(-dt / (params.r1 * params.c1));
    const double a3 = std::exp(-dt / (params.r2 * params.c2));
    LinearizedModel m;
    m.a = Vec3(1.0, a2, a3).asDiagonal();
    m.b = Vec3(dt / params.q_max, params.r1 * (1.0 - a2), params.r2 * (1.0 - a3));
    m.d = params.r0;
    m.ocv = &params.ocv;
    return m;
}

Row3 LinearizedModel::c_row(const CellState& x) const {
    return Row3(ocv->derivative(x.z), 1.0, 1.0);
}

double LinearizedModel::h(const CellState& x) const {
    return ocv->lookup(x.z) + x.v_r1 + x.v_r2;
}

bool is_symmetric_psd(const Mat3& m, double rel_floor) {
    const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
    Eigen::SelfAdjointEigenSolver<Mat3> es(m, Eigen::EigenvaluesOnly);
    const double floor = -rel_floor * std::max(std::abs(m.trace()), 1e-300);
    return es.eigenvalues().minCoeff() >= floor;
}

double coulomb_count_step(double z, double i, double dt, double q_max) {
    if (!(dt > 0.0)) throw DomainError("coulomb_count_step: dt must be positive");
    return clamp_soc(z + dt * i / q_max);
}

Prediction ekf_predict(const FilterState& fs, const LinearizedModel& model, double i) {
    Prediction out{fs, {}};
    const Vec3 x = model.a * to_vector(fs.x_hat) + model.b * i;
    CellState& xp = out.state.x_hat;
    xp.z = clamp_soc(x(0), &xp.saturated);
    xp.v_r1 = x(1);
    xp.v_r2 = x(2);
    Mat3 p = model.a * fs.p * model.a.transpose() + fs.sigma;
    out.state.p = 0.5 * (p + p.transpose());
    out.predicted = xp;
    return out;
}

Correction ekf_correct(const FilterState& fs, const LinearizedModel& model, double i,
                       double v_measured) {
    Correction out{fs, {}};
    StepRecord& rec = out.record;

    const Row3 c = model.c_row(fs.x_hat);
    const Vec3 pct = fs.p * c.transpose();
    rec.cpc_prior = c * pct;
    const double s = rec.cpc_prior + fs.sigma2_meas;
    if (!(s > 0.0) || !std::isfinite(s))
        throw NumericalFault("ekf_correct: innovation variance " + std::to_string(s) + " is not positive");

    rec.e_minus = v_measured - (model.h(fs.x_hat) + model.d * i);
    rec.k_gain = pct / s;

    const Vec3 x = to_vector(fs.x_hat) + rec.k_gain * rec.e_minus;
    CellState& xu = out.state.x_hat;
    xu.z = clamp_soc(x(0), &xu.saturated);
    xu.v_r1 = x(1);
    xu.v_r2 = x(2);

    // Joseph form keeps P symmetric PSD under rounding.
    const Mat3 ikc = Mat3::Identity() - rec.k_gain * c;
    Mat3 p = ikc * fs.p * ikc.transpose() + fs.sigma2_meas * rec.k_gain * rec.k_gain.transpose();
    out.state.p = 0.5 * (p + p.transpose());

    rec.e_plus = v_measured - (model.h(xu) + model.d * i);
    rec.cpc_term = std::max(0.0, double(c * out.state.p * c.transpose()));
    return out;
}

FilterState mle_adapt(const WindowStats& ws, const StepRecord& last, const FilterState& fs) {
    FilterState out = fs;
    out.sigma = ws.innovation_mean() * (last.k_gain * last.k_gain.transpose());
    out.sigma2_meas = ws.posterior_mean();
    return out;
}

FilterState cm_adapt(const WindowStats& ws, const StepRecord& last, const FilterState& fs,
                     double sigma2_floor) {
    FilterState out = fs;
    const double c_hat = ws.innovation_mean();
    out.sigma = c_hat * (last.k_gain * last.k_gain.transpose());
    out.sigma2_meas = std::max(c_hat - last.cpc_prior, sigma2_floor);
    return out;
}

std::string_view to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::CoulombCounting: return "cc";
        case EstimatorKind::Ekf: return "ekf";
        case EstimatorKind::AekfMle: return "aekf-mle";
        case EstimatorKind::AekfCm: return "aekf-cm";
    }
    return "?";
}

EstimatorKind parse_estimator_kind(std::string_view name) {
    for (EstimatorKind k : kAllEstimators)
        if (to_string(k) == name) return k;
    throw DomainError("unknown estimator kind '" + std::string(name) +
                      "' (expected cc, ekf, aekf-mle or aekf-cm)");
}

Estimator::Estimator(EstimatorKind kind, EcmParams params, const CellState& initial,
                     EstimatorOptions options)
    : kind_(kind),
      params_(std::move(params)),
      options_(std::move(options)),
      window_(std::max<std::size_t>(options_.window, 1)) {
    params_.validate();
    if (kind_ == EstimatorKind::AekfMle || kind_ == EstimatorKind::AekfCm) {
        if (options_.window == 0) throw DomainError("estimator: window size must be at least 1");
    }
    fs_.x_hat = initial;
    fs_.x_hat.z = clamp_soc(initial.z);
    fs_.p = options_.p0;
    fs_.sigma = options_.sigma0;
    fs_.sigma2_meas = options_.sigma2_0;
}

namespace {

// Rank-one process covariances drive the RC entries of P and Sigma toward
// zero; left alone they sink into the subnormal range, where arithmetic is
// slow on most CPUs. Anything below DBL_MIN carries no information here.
void flush_subnormals(Mat3& m) {
    for (double& x : m.reshaped())
        if (std::abs(x) < std::numeric_limits<double>::min()) x = 0.0;
}

// Flush-to-zero and denormals-are-zero for one filter step, restoring the
// caller's floating-point mode on exit. Intermediate products of the tiny RC
// gains are subnormal even when the stored state is not.
class ScopedFlushToZero {
public:
#ifdef SOCEST_HAVE_MXCSR
    ScopedFlushToZero() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
    ~ScopedFlushToZero() { _mm_setcsr(saved_); }

private:
    unsigned saved_;
#endif
};

}  // namespace

double Estimator::step(double i, double v_measured, double dt) {
    ++steps_;
    if (kind_ == EstimatorKind::CoulombCounting) {
        fs_.x_hat.z = coulomb_count_step(fs_.x_hat.z, i, dt, params_.q_max);
        return fs_.x_hat.z;
    }

    const ScopedFlushToZero ftz;
    if (dt != model_dt_) {
        model_ = LinearizedModel::from_params(params_, dt);
        model_dt_ = dt;
    }
    // params_ lives in this object; re-point after copies/moves of *this.
    model_.ocv = &params_.ocv;

    auto [predicted, _] = ekf_predict(fs_, model_, i);
    auto [corrected, record] = ekf_correct(predicted, model_, i, v_measured);
    fs_ = corrected;
    record_ = record;

    if (kind_ != EstimatorKind::Ekf && options_.adapt) {
        window_.push(record_.e_minus * record_.e_minus, record_.e_plus * record_.e_plus + record_.cpc_term);
        if (steps_ > options_.warmup_steps()) {
            fs_ = kind_ == EstimatorKind::AekfMle ? mle_adapt(window_, record_, fs_)
                                                 : cm_adapt(window_, record_, fs_, options_.sigma2_floor);
        }
    }
    flush_subnormals(fs_.p);
    flush_subnormals(fs_.sigma);
    if (options_.on_step) options_.on_step(fs_, record_);
    return fs_.x_hat.z;
}

std::vector<double> estimator_run(EstimatorKind kind, const EcmParams& params,
                                  const Profile& profile, const CellState& initial,
                                  const EstimatorOptions& options) {
    if (kind != EstimatorKind::CoulombCounting && !profile.has_voltage())
        throw DomainError("estimator_run: profile has no voltage column");
    Estimator est(kind, params, initial, options);
    std::vector<double> out(profile.size());
    const std::vector<double>* v = profile.has_voltage() ? &*profile.voltage : nullptr;
    for (std::size_t k = 0; k < profile.size(); ++k)
        out[k] = est.step(profile.current[k], v ? (*v)[k] : 0.0, profile.dt(k, options.first_dt));
    return out;
}

}  // namespace socest
