#include <doctest.h>

#include <cmath>
#include <deque>
#include <random>

#include "socest/bench.hpp"
#include "socest/errors.hpp"
#include "socest/filters.hpp"

using namespace socest;

namespace {

Mat3 random_spd(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = g(rng);
    return m * m.transpose() + 0.1 * Mat3::Identity();
}

// Plain loops, independent of Eigen's expression templates.
Mat3 triple_product(const Mat3& a, const Mat3& p) {
    Mat3 out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) s += a(r, i) * p(i, j) * a(c, j);
            out(r, c) = s;
        }
    return out;
}

FilterState fresh_state(double z) {
    FilterState fs;
    fs.x_hat = {z, 0.0, 0.0, false};
    fs.p = Vec3(1e-2, 1e-6, 1e-6).asDiagonal();
    fs.sigma = Vec3(1e-10, 1e-8, 1e-8).asDiagonal();
    fs.sigma2_meas = 1e-4;
    return fs;
}

StepRecord record(double e_minus, double e_plus, double cpc, Vec3 k = Vec3(0.1, 0.2, 0.3)) {
    StepRecord r;
    r.e_minus = e_minus;
    r.e_plus = e_plus;
    r.cpc_term = cpc;
    r.k_gain = k;
    return r;
}

}  // namespace

TEST_CASE("coulomb counting") {
    CHECK(coulomb_count_step(0.3, 0.0, 1.0, 7200.0) == 0.3);
    CHECK(coulomb_count_step(0.1, 1.0, 3600.0, 7200.0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(coulomb_count_step(0.99, 1.0, 3600.0, 7200.0) == 1.0);
    CHECK_THROWS_AS(coulomb_count_step(0.5, 1.0, 0.0, 7200.0), DomainError);

    // A sensor offset b integrates to a drift of b*T/q_max.
    const double b = 0.05, q = 18000.0, dt = 1.0;
    const int steps = 3600;
    double z_true = 0.8, z_meas = 0.8;
    for (int k = 0; k < steps; ++k) {
        z_true = coulomb_count_step(z_true, -2.0, dt, q);
        z_meas = coulomb_count_step(z_meas, -2.0 + b, dt, q);
    }
    CHECK(z_meas - z_true == doctest::Approx(b * steps * dt / q).epsilon(1e-9));
}

TEST_CASE("linearized model") {
    const EcmParams p = default_cell();
    const auto m = LinearizedModel::from_params(p, 2.0);
    CHECK(m.a(0, 0) == 1.0);
    CHECK(m.a(1, 1) == doctest::Approx(std::exp(-2.0 / p.tau1())));
    CHECK(m.a(2, 2) == doctest::Approx(std::exp(-2.0 / p.tau2())));
    CHECK(m.a(0, 1) == 0.0);
    CHECK(m.b(0) == doctest::Approx(2.0 / p.q_max));
    CHECK(m.b(1) == doctest::Approx(p.r1 * (1 - m.a(1, 1))));
    CHECK(m.d == p.r0);
    const Row3 c = m.c_row({0.5, 0, 0, false});
    CHECK(c(0) == doctest::Approx(p.ocv.derivative(0.5)));
    CHECK(c(1) == 1.0);
    CHECK(c(2) == 1.0);
}

TEST_CASE("ekf_predict") {
    const EcmParams params = default_cell();

    SUBCASE("identity propagation") {
        LinearizedModel m;
        m.ocv = &params.ocv;
        FilterState fs = fresh_state(0.5);
        fs.sigma.setZero();
        const auto pr = ekf_predict(fs, m, 3.0);
        CHECK(pr.state.p == fs.p);
        CHECK(pr.predicted.z == 0.5);
    }
    SUBCASE("diagonal algebra") {
        const auto m = LinearizedModel::from_params(params, 5.0);
        const FilterState fs = fresh_state(0.5);
        const auto pr = ekf_predict(fs, m, 1.0);
        for (int j = 0; j < 3; ++j)
            CHECK(pr.state.p(j, j) ==
                  doctest::Approx(m.a(j, j) * m.a(j, j) * fs.p(j, j) + fs.sigma(j, j)).epsilon(1e-14));
        CHECK(pr.predicted.z == doctest::Approx(0.5 + 5.0 / params.q_max));
    }
    SUBCASE("random SPD against brute-force triple product") {
        std::mt19937_64 rng(7);
        for (int n = 0; n < 100; ++n) {
            LinearizedModel m;
            m.ocv = &params.ocv;
            m.a = random_spd(rng);  // any matrix works for the algebra
            FilterState fs = fresh_state(0.5);
            fs.p = random_spd(rng);
            fs.sigma = random_spd(rng);
            const Mat3 expected = triple_product(m.a, fs.p) + fs.sigma;
            const Mat3 got = ekf_predict(fs, m, 0.0).state.p;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) CHECK(got(r, c) == doctest::Approx(expected(r, c)).epsilon(1e-12));
            CHECK(got == got.transpose());
        }
    }
}

TEST_CASE("ekf_correct") {
    const EcmParams params = default_cell();
    const auto m = LinearizedModel::from_params(params, 1.0);

    SUBCASE("huge measurement noise leaves the prediction alone") {
        FilterState fs = fresh_state(0.5);
        const Row3 c = m.c_row(fs.x_hat);
        fs.sigma2_meas = 1e12 * double(c * fs.p * c.transpose());
        const auto out = ekf_correct(fs, m, 1.0, 3.9);
        CHECK(out.state.x_hat.z == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(out.record.k_gain.norm() < 1e-9);
    }
    SUBCASE("zero innovation") {
        FilterState fs = fresh_state(0.5);
        fs.x_hat.v_r1 = 0.004;
        const double v = m.h(fs.x_hat) + params.r0 * 2.0;
        const auto out = ekf_correct(fs, m, 2.0, v);
        CHECK(out.record.e_minus == 0.0);
        CHECK(out.state.x_hat == fs.x_hat);
        CHECK(out.record.e_plus == 0.0);
    }
    SUBCASE("Joseph form equals the short form for the optimal gain") {
        std::mt19937_64 rng(9);
        for (int n = 0; n < 50; ++n) {
            FilterState fs = fresh_state(0.5);
            fs.p = 1e-3 * random_spd(rng);
            const auto out = ekf_correct(fs, m, 0.5, 3.7);
            const Row3 c = m.c_row(fs.x_hat);
            const Mat3 short_form = (Mat3::Identity() - out.record.k_gain * c) * fs.p;
            for (int r = 0; r < 3; ++r)
                for (int col = 0; col < 3; ++col)
                    CHECK(out.state.p(r, col) == doctest::Approx(short_form(r, col)).epsilon(1e-9).scale(1e-12));
            CHECK(is_symmetric_psd(out.state.p));
            CHECK(out.record.cpc_term >= 0.0);
            CHECK(out.record.cpc_prior == doctest::Approx(double(c * fs.p * c.transpose())));
        }
    }
    SUBCASE("non-positive innovation variance is a numerical fault") {
        FilterState fs = fresh_state(0.5);
        fs.p.setZero();
        fs.sigma2_meas = 0.0;
        CHECK_THROWS_AS(ekf_correct(fs, m, 0.0, 3.7), NumericalFault);
    }
}

TEST_CASE("EKF converges from a 20 % SoC error on exact noiseless data") {
    const EcmParams params = default_cell();
    const CellState truth0{0.7, 0.0, 0.0, false};
    const Profile drive = make_drive_profile(1200.0, 1.0, 17);
    const auto gt = make_ground_truth(params, truth0, drive);

    EstimatorOptions opts;
    opts.p0 = Vec3(0.04, 1e-6, 1e-6).asDiagonal();
    Estimator ekf(EstimatorKind::Ekf, params, {0.5, 0, 0, false}, opts);
    for (std::size_t k = 0; k < gt.clean.size(); ++k) {
        const double z = ekf.step(gt.clean.current[k], (*gt.clean.voltage)[k], 1.0);
        REQUIRE(is_symmetric_psd(ekf.state().p));
        if (k >= 500) CHECK(std::abs(z - gt.soc[k]) < 0.01);
        if (k >= 1000) CHECK(std::abs(z - gt.soc[k]) < 0.001);
    }
    CHECK(std::abs(ekf.last_record().e_minus) < 1e-3);
}

TEST_CASE("mle_adapt") {
    const FilterState fs = fresh_state(0.5);

    SUBCASE("zero residuals give a zero process covariance") {
        WindowStats ws(8);
        StepRecord r = record(0.0, 0.0, 0.0);
        for (int k = 0; k < 8; ++k) ws.push(0.0, 0.0);
        const FilterState out = mle_adapt(ws, r, fs);
        CHECK(out.sigma == Mat3::Zero());
        CHECK(out.sigma2_meas == 0.0);
    }
    SUBCASE("constant window gives a^2 + b") {
        const double a = 0.003, b = 2e-6;
        WindowStats ws(16);
        for (int k = 0; k < 16; ++k) ws.push(0.0, a * a + b);
        CHECK(mle_adapt(ws, record(0.0, a, b), fs).sigma2_meas == doctest::Approx(a * a + b).epsilon(1e-15));
    }
    SUBCASE("rank-one process covariance from the current gain") {
        WindowStats ws(4);
        ws.push(4e-6, 0.0);
        ws.push(2e-6, 0.0);
        const Vec3 k(0.5, -0.1, 0.02);
        const FilterState out = mle_adapt(ws, record(0.0, 0.0, 0.0, k), fs);
        const Mat3 expected = 3e-6 * k * k.transpose();
        CHECK((out.sigma - expected).cwiseAbs().maxCoeff() < 1e-20);
        CHECK(is_symmetric_psd(out.sigma));
    }
    SUBCASE("window of 128 against brute force over 1000 random records") {
        std::mt19937_64 rng(1);
        std::normal_distribution<double> g(0.0, 1e-2);
        std::uniform_real_distribution<double> u(0.0, 1e-5);
        WindowStats ws(128);
        std::deque<StepRecord> kept;
        for (int n = 0; n < 1000; ++n) {
            const StepRecord r = record(g(rng), g(rng), u(rng), Vec3(g(rng), g(rng), g(rng)));
            ws.push(r.e_minus * r.e_minus, r.e_plus * r.e_plus + r.cpc_term);
            kept.push_back(r);
            if (kept.size() > 128) kept.pop_front();

            double s_minus = 0.0, s_plus = 0.0;
            for (const auto& q : kept) {
                s_minus += q.e_minus * q.e_minus;
                s_plus += q.e_plus * q.e_plus + q.cpc_term;
            }
            const double count = static_cast<double>(kept.size());
            const Mat3 sigma_ref = (s_minus / count) * r.k_gain * r.k_gain.transpose();
            const FilterState out = mle_adapt(ws, r, fs);
            REQUIRE(out.sigma2_meas == doctest::Approx(s_plus / count).epsilon(1e-9));
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    REQUIRE(out.sigma(i, j) == doctest::Approx(sigma_ref(i, j)).epsilon(1e-9));
        }
    }
}

TEST_CASE("cm_adapt") {
    const FilterState fs = fresh_state(0.5);

    SUBCASE("zero innovations engage the floor") {
        WindowStats ws(8);
        for (int k = 0; k < 8; ++k) ws.push(0.0, 0.0);
        StepRecord r = record(0.0, 0.0, 0.0);
        r.cpc_prior = 1e-6;
        const FilterState out = cm_adapt(ws, r, fs);
        CHECK(out.sigma2_meas == kDefaultSigma2Floor);
        CHECK(out.sigma == Mat3::Zero());
    }
    SUBCASE("innovation mean minus predicted output variance") {
        WindowStats ws(4);
        for (double e : {1e-3, 2e-3, 3e-3, 4e-3}) ws.push(e * e, 0.0);
        StepRecord r = record(4e-3, 0.0, 0.0);
        r.cpc_prior = 1e-6;
        const double c_hat = (1 + 4 + 9 + 16) * 1e-6 / 4.0;
        const FilterState out = cm_adapt(ws, r, fs);
        CHECK(out.sigma2_meas == doctest::Approx(c_hat - 1e-6));
        CHECK(out.sigma(0, 0) == doctest::Approx(c_hat * 0.01));
    }
    SUBCASE("recovers the measurement variance of a stationary linear fixture") {
        // Linear OCV, exact model, no process noise: the innovation variance
        // is C P- C^T + sigma^2 and the matched estimate should find sigma^2.
        EcmParams p = default_cell();
        p.ocv = OcvTable({0.0, 1.0}, {3.0, 4.2});
        const double sigma2_true = 4e-6;
        const Profile drive = make_drive_profile(6000.0, 1.0, 23);
        auto gt = make_ground_truth(p, {0.6, 0, 0, false}, drive);
        const Profile meas = add_measurement_noise(gt.clean, {0.0, sigma2_true, 99});

        EstimatorOptions opts;
        opts.window = 1000;
        opts.p0 = Vec3(1e-8, 1e-10, 1e-10).asDiagonal();
        opts.sigma0 = Vec3(1e-14, 1e-14, 1e-14).asDiagonal();
        opts.sigma2_0 = sigma2_true;
        Estimator cm(EstimatorKind::AekfCm, p, {0.6, 0, 0, false}, opts);
        double sum = 0.0;
        int n = 0;
        for (std::size_t k = 0; k < meas.size(); ++k) {
            cm.step(meas.current[k], (*meas.voltage)[k], 1.0);
            if (k >= 2000) {
                sum += cm.state().sigma2_meas;
                ++n;
            }
        }
        CHECK(sum / n == doctest::Approx(sigma2_true).epsilon(0.1));
    }
    SUBCASE("window means agree with brute force") {
        std::mt19937_64 rng(2);
        std::normal_distribution<double> g(0.0, 1e-2);
        WindowStats ws(32);
        std::deque<double> kept;
        for (int n = 0; n < 300; ++n) {
            StepRecord r = record(g(rng), 0.0, 0.0, Vec3(g(rng), g(rng), g(rng)));
            r.cpc_prior = 1e-5 * std::abs(g(rng));
            ws.push(r.e_minus * r.e_minus, 0.0);
            kept.push_back(r.e_minus * r.e_minus);
            if (kept.size() > 32) kept.pop_front();
            double s = 0;
            for (double x : kept) s += x;
            const double c_hat = s / static_cast<double>(kept.size());
            const FilterState out = cm_adapt(ws, r, fs);
            REQUIRE(out.sigma2_meas == doctest::Approx(std::max(c_hat - r.cpc_prior, kDefaultSigma2Floor)).epsilon(1e-9));
            REQUIRE(out.sigma(1, 2) == doctest::Approx(c_hat * r.k_gain(1) * r.k_gain(2)).epsilon(1e-9));
        }
    }
}

TEST_CASE("estimator kinds") {
    CHECK(parse_estimator_kind("aekf-mle") == EstimatorKind::AekfMle);
    CHECK(to_string(EstimatorKind::CoulombCounting) == "cc");
    CHECK_THROWS_AS(parse_estimator_kind("ukf"), DomainError);
    for (EstimatorKind k : kAllEstimators) CHECK(parse_estimator_kind(to_string(k)) == k);
}

TEST_CASE("estimator_run") {
    const EcmParams params = default_cell();
    const Profile drive = make_drive_profile(3000.0, 1.0, 5);
    const auto gt = make_ground_truth(params, {0.9, 0, 0, false}, drive);
    const Profile meas = add_measurement_noise(gt.clean, {0.1, 1e-5, 4});
    const CellState init{0.85, 0, 0, false};

    SUBCASE("CC reproduces iterated coulomb counting") {
        const auto z = estimator_run(EstimatorKind::CoulombCounting, params, meas, init);
        double ref = init.z;
        for (std::size_t k = 0; k < z.size(); ++k) {
            ref = coulomb_count_step(ref, meas.current[k], meas.dt(k), params.q_max);
            CHECK(z[k] == ref);
        }
        Profile no_v = meas;
        no_v.voltage.reset();
        CHECK(estimator_run(EstimatorKind::CoulombCounting, params, no_v, init) == z);
        CHECK_THROWS_AS(estimator_run(EstimatorKind::Ekf, params, no_v, init), DomainError);
    }
    SUBCASE("adaptation off is the plain EKF") {
        EstimatorOptions off;
        off.adapt = false;
        const auto ekf = estimator_run(EstimatorKind::Ekf, params, meas, init);
        CHECK(estimator_run(EstimatorKind::AekfMle, params, meas, init, off) == ekf);
        CHECK(estimator_run(EstimatorKind::AekfCm, params, meas, init, off) == ekf);
    }
    SUBCASE("output length and covariance invariants") {
        for (EstimatorKind kind : {EstimatorKind::Ekf, EstimatorKind::AekfMle, EstimatorKind::AekfCm}) {
            EstimatorOptions opts;
            opts.window = 64;
            std::size_t bad = 0, steps = 0;
            opts.on_step = [&](const FilterState& fs, const StepRecord& r) {
                ++steps;
                if (!is_symmetric_psd(fs.p)) ++bad;
                if (!is_symmetric_psd(fs.sigma, 1e-10)) ++bad;
                if (fs.sigma2_meas < 0.0 || r.cpc_term < 0.0) ++bad;
            };
            const auto z = estimator_run(kind, params, meas, init, opts);
            CHECK(z.size() == meas.size());
            CHECK(steps == meas.size());
            CHECK(bad == 0);
        }
    }
    SUBCASE("adaptation starts after the warm-up") {
        EstimatorOptions opts;
        opts.window = 50;
        Estimator est(EstimatorKind::AekfMle, params, init, opts);
        for (std::size_t k = 0; k < 50; ++k) est.step(meas.current[k], (*meas.voltage)[k], 1.0);
        CHECK(est.state().sigma2_meas == opts.sigma2_0);
        CHECK(est.window().full());
        est.step(meas.current[50], (*meas.voltage)[50], 1.0);
        CHECK(est.state().sigma2_meas != opts.sigma2_0);
        CHECK(est.state().sigma2_meas == doctest::Approx(est.window().posterior_mean()));
    }
    SUBCASE("zero window is rejected for adaptive kinds") {
        EstimatorOptions opts;
        opts.window = 0;
        CHECK_THROWS_AS(Estimator(EstimatorKind::AekfMle, params, init, opts), DomainError);
        CHECK_NOTHROW(Estimator(EstimatorKind::Ekf, params, init, opts));
    }
}

TEST_CASE("AEKF-MLE beats the plain EKF on the drive benchmark scenario") {
    const BenchConfig cfg;
    const Profile drive = make_drive_profile(cfg.duration, cfg.dt, 77);
    const auto gt = make_ground_truth(cfg.params_true, {cfg.initial_soc, 0, 0, false}, drive);
    TrialSetup setup{cfg.params_true, cfg.params_true, {cfg.initial_soc, 0, 0, false},
                     cfg.initial_soc + cfg.initial_soc_error, 128, cfg.filter};
    double wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto maes = run_trial(setup, gt, {0.1, 1e-5, seed});
        wins += maes[static_cast<std::size_t>(EstimatorKind::AekfMle)] <
                maes[static_cast<std::size_t>(EstimatorKind::Ekf)];
    }
    CHECK(wins == 10);
}
