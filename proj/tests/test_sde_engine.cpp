#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hilbert_diffuse/sde_engine.hpp"
#include "hilbert_diffuse/stats.hpp"

namespace {

std::vector<std::size_t> all_indices(std::size_t steps) {
    std::vector<std::size_t> r(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) r[k] = k;
    return r;
}

}  // namespace

TEST_CASE("zero drift makes Euler-Maruyama exact: X_t = x0 + accumulated noise") {
    const auto Q = hd::covariance_spectrum::poly2(6);
    const auto law = hd::initial_law::dirac({1.0, 0.0, -1.0, 0.0, 2.0, 0.0});
    hd::integrate_options opt;
    opt.record = all_indices(50);
    const auto batch = hd::integrate_bounded(law, hd::drift_model::zero(Q.dim), Q, 0.5, 0.01,
                                             20, 777, opt);
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        hd::vec x = batch.state_vec(0, p);
        for (std::size_t k = 0; k < batch.steps; ++k) {
            const auto dw = batch.noise_increment(p, k);
            for (std::size_t j = 0; j < batch.dim; ++j) x[j] += dw[j];
            const auto recorded = batch.state_vec(batch.slot_of_index(k + 1), p);
            REQUIRE(x == recorded);  // bit-identical regeneration
        }
    }
}

TEST_CASE("constant drift shifts the mean by c t") {
    const auto Q = hd::covariance_spectrum::geom2(4);
    const double c = -0.8, T = 1.0;
    const auto law = hd::initial_law::dirac({2.0, 0.0, 0.0, 0.0});
    const auto batch = hd::integrate_bounded(law, hd::drift_model::constant(c, Q.dim), Q, T,
                                             0.01, 10000, 42);
    hd::running_moments m;
    const std::size_t slot = batch.slot_of_time(T);
    for (std::size_t p = 0; p < batch.n_paths; ++p) m.add(batch.state(slot, p)[0]);
    REQUIRE(std::fabs(m.mean() - (2.0 + c * T)) <= 3.0 * m.stderr_mean());
}

TEST_CASE("half-step refinement on shared noise converges at first order") {
    const auto Q = hd::covariance_spectrum::poly2(6);
    const auto F = hd::drift_model::tanh_drift(Q);
    const auto law = hd::initial_law::dirac(hd::vec(Q.dim, 1.0));
    const double T = 1.0;
    const std::size_t N = 200;
    const std::uint64_t seed = 2026;

    // substeps align the draw indices: a run at step h with s sub-draws
    // consumes the same (stream, index) normals as a run at h/s.
    auto strong_error = [&](double h_coarse) {
        hd::integrate_options coarse, fine;
        coarse.substeps = 2;
        const auto a = hd::integrate_bounded(law, F, Q, T, h_coarse, N, seed, coarse);
        const auto b = hd::integrate_bounded(law, F, Q, T, h_coarse / 2.0, N, seed, fine);
        const std::size_t sa = a.slot_of_time(T), sb = b.slot_of_time(T);
        hd::running_moments err;
        for (std::size_t p = 0; p < N; ++p) {
            double e2 = 0.0;
            for (std::size_t j = 0; j < Q.dim; ++j) {
                const double d = a.state(sa, p)[j] - b.state(sb, p)[j];
                e2 += d * d;
            }
            err.add(std::sqrt(e2));
        }
        return err.mean();
    };

    const double e1 = strong_error(0.02);
    const double e2 = strong_error(0.01);
    REQUIRE(e2 < e1);
    REQUIRE(e1 / e2 > 1.5);  // strong order ~1 for additive noise
    REQUIRE(e1 / e2 < 3.0);
}

TEST_CASE("results are bit-identical across worker counts and reruns") {
    const auto Q = hd::covariance_spectrum::geom2(5);
    const auto F = hd::drift_model::tanh_drift(Q);
    const auto law = hd::initial_law::gaussian(hd::vec(Q.dim, 0.0), hd::vec(Q.dim, 1.0));
    hd::integrate_options j1, j3;
    j1.jobs = 1;
    j3.jobs = 3;
    const auto a = hd::integrate_bounded(law, F, Q, 0.5, 0.005, 101, 9, j1);
    const auto b = hd::integrate_bounded(law, F, Q, 0.5, 0.005, 101, 9, j3);
    const auto c = hd::integrate_bounded(law, F, Q, 0.5, 0.005, 101, 9, j3);
    REQUIRE(a.states == b.states);
    REQUIRE(b.states == c.states);
}

TEST_CASE("mild scheme with zero drift matches the exact OU transition law") {
    const auto Q = hd::covariance_spectrum::geom2(8);
    const auto A = hd::linear_operator::heat(Q.dim);
    hd::vec x0(Q.dim, 0.0);
    x0[0] = 1.5;
    x0[3] = -2.0;
    const auto law = hd::initial_law::dirac(x0);
    hd::integrate_options opt;
    const std::size_t N = 20000;
    for (double t : {0.1, 1.0}) {
        const auto batch = hd::integrate_mild(law, A, hd::drift_model::zero(Q.dim), Q, t, 0.01,
                                              N, 1234, opt);
        const std::size_t slot = batch.slot_of_time(t);
        for (std::size_t j : {std::size_t{0}, std::size_t{3}, std::size_t{7}}) {
            hd::running_moments m;
            for (std::size_t p = 0; p < N; ++p) m.add(batch.state(slot, p)[j]);
            const double mean_exact = std::exp(-A.a[j] * t) * x0[j];
            const double var_exact =
                Q.q[j] * (-std::expm1(-2.0 * A.a[j] * t)) / (2.0 * A.a[j]);
            REQUIRE(std::fabs(m.mean() - mean_exact) <= 3.0 * m.stderr_mean());
            REQUIRE(std::fabs(m.variance() - var_exact) <=
                    4.0 * var_exact * std::sqrt(2.0 / double(N)));
        }
    }
}

TEST_CASE("mild scheme relaxes to the stationary variance q_j / (2 a_j)") {
    const auto Q = hd::covariance_spectrum::poly2(4);
    const auto A = hd::linear_operator::shifted_gap(Q.dim, 1.0);
    const auto law = hd::initial_law::dirac(hd::vec(Q.dim, 0.0));
    const std::size_t N = 20000;
    const auto batch =
        hd::integrate_mild(law, A, hd::drift_model::zero(Q.dim), Q, 6.0, 0.05, N, 77);
    const std::size_t slot = batch.slot_of_time(6.0);
    for (std::size_t j = 0; j < Q.dim; ++j) {
        hd::running_moments m;
        for (std::size_t p = 0; p < N; ++p) m.add(batch.state(slot, p)[j]);
        const double target = Q.q[j] / (2.0 * A.a[j]);
        REQUIRE(std::fabs(m.variance() - target) <= 4.0 * target * std::sqrt(2.0 / double(N)));
    }
}

TEST_CASE("mild scheme degenerates to Euler-Maruyama as the operator vanishes") {
    const auto Q = hd::covariance_spectrum::poly2(5);
    const auto F = hd::drift_model::tanh_drift(Q);
    const auto law = hd::initial_law::dirac(hd::vec(Q.dim, 0.5));
    const auto A = hd::linear_operator(hd::vec(Q.dim, 1e-8), "custom");
    const auto em = hd::integrate_bounded(law, F, Q, 1.0, 0.01, 10, 5);
    const auto mild = hd::integrate_mild(law, A, F, Q, 1.0, 0.01, 10, 5);
    const std::size_t se = em.slot_of_time(1.0), sm = mild.slot_of_time(1.0);
    for (std::size_t p = 0; p < 10; ++p)
        for (std::size_t j = 0; j < Q.dim; ++j)
            REQUIRE(em.state(se, p)[j] ==
                    Catch::Approx(mild.state(sm, p)[j]).margin(1e-6).epsilon(1e-6));
}

TEST_CASE("stochastic convolution increments have the exact per-mode variance") {
    const auto Q = hd::covariance_spectrum({1.0});
    const auto A = hd::linear_operator({1.0});
    hd::noise_stream s(4, 0);
    std::uint64_t cur = 0;

    REQUIRE(hd::stochastic_convolution_increment(A, Q, 0.0, s, cur) == hd::vec{0.0});
    REQUIRE(cur == 0);

    const std::size_t n = 100000;
    hd::running_moments m;
    for (std::size_t i = 0; i < n; ++i)
        m.add(hd::stochastic_convolution_increment(A, Q, 1.0, s, cur)[0]);
    const double exact = (1.0 - std::exp(-2.0)) / 2.0;  // 0.432332...
    REQUIRE(std::fabs(m.mean()) <= 4.0 * m.stderr_mean());
    REQUIRE(std::fabs(m.variance() - exact) <= 4.0 * exact * std::sqrt(2.0 / double(n)));

    // Small-step limit: variance ~ q h.
    hd::running_moments ms;
    for (std::size_t i = 0; i < n; ++i)
        ms.add(hd::stochastic_convolution_increment(A, Q, 1e-6, s, cur)[0]);
    REQUIRE(std::fabs(ms.variance() - 1e-6) <= 4.0 * 1e-6 * std::sqrt(2.0 / double(n)));
}

TEST_CASE("restart_from chains runs that match the direct run in law") {
    const auto Q = hd::covariance_spectrum::geom2(4);
    const auto F = hd::drift_model::tanh_drift(Q);
    const auto law = hd::initial_law::gaussian(hd::vec(Q.dim, 1.0), hd::vec(Q.dim, 0.25));
    const double T = 1.0, t0 = 0.5;
    const std::size_t N = 20000;

    hd::integrate_options direct_opt;
    direct_opt.record = {0, 50, 100};
    const auto direct = hd::integrate_bounded(law, F, Q, T, 0.01, N, 321, direct_opt);

    // restart at t0 = 0 recovers the recorded initial states verbatim.
    {
        const auto relaw = hd::restart_from(direct, 0.0);
        hd::noise_stream s(1, 2);
        std::uint64_t cur = 0;
        const auto x = relaw.sample(s, cur);
        bool found = false;
        for (std::size_t p = 0; p < N && !found; ++p) found = (direct.state_vec(0, p) == x);
        REQUIRE(found);
    }

    hd::integrate_options leg2_opt;
    leg2_opt.stream_base = N;  // fresh noise for the second leg
    const auto chained = hd::integrate_bounded(hd::restart_from(direct, t0), F, Q, T - t0,
                                               0.01, N, 321, leg2_opt);

    std::vector<double> a(N), b(N);
    const std::size_t sd = direct.slot_of_time(T), sc = chained.slot_of_time(T - t0);
    for (std::size_t p = 0; p < N; ++p) {
        a[p] = direct.state(sd, p)[0];
        b[p] = chained.state(sc, p)[0];
    }
    const auto ks = hd::ks_two_sample(a, b);
    REQUIRE(ks.p_value > 0.01);

    // Variance additivity sanity for the zero-drift control.
    const auto z = hd::drift_model::zero(Q.dim);
    const auto dz = hd::integrate_bounded(law, z, Q, T, 0.01, N, 321, direct_opt);
    const auto cz = hd::integrate_bounded(hd::restart_from(dz, t0), z, Q, T - t0, 0.01, N, 321,
                                          leg2_opt);
    hd::running_moments vd, vc;
    for (std::size_t p = 0; p < N; ++p) {
        vd.add(dz.state(dz.slot_of_time(T), p)[0]);
        vc.add(cz.state(cz.slot_of_time(T - t0), p)[0]);
    }
    const double se = vd.variance() * std::sqrt(2.0 / double(N));
    REQUIRE(std::fabs(vd.variance() - vc.variance()) <= 4.0 * std::sqrt(2.0) * se);
}

TEST_CASE("mild dynamics stay moment-bounded over long horizons") {
    const auto Q = hd::covariance_spectrum::poly2(8);
    const auto A = hd::linear_operator::heat(Q.dim);
    const auto F = hd::drift_model::tanh_drift(Q);
    hd::vec x0(Q.dim, 0.0);
    x0[0] = 2.0;
    const auto law = hd::initial_law::dirac(x0);
    const std::size_t N = 2000;
    double zeta0 = 4.0;
    for (double T : {5.0, 10.0}) {
        const auto batch = hd::integrate_mild(law, A, F, Q, T, 0.05, N, 11);
        hd::running_moments m;
        const std::size_t slot = batch.slot_of_time(T);
        for (std::size_t p = 0; p < N; ++p) {
            hd::vec x = batch.state_vec(slot, p);
            m.add(hd::dot(x, x));
        }
        REQUIRE(m.mean() < zeta0);  // dissipative: below the initial energy
    }
}

TEST_CASE("engine rejects inconsistent configurations") {
    const auto Q = hd::covariance_spectrum::poly2(3);
    const auto law = hd::initial_law::dirac({0.0, 0.0, 0.0});
    const auto F = hd::drift_model::zero(3);
    REQUIRE_THROWS_AS(hd::integrate_bounded(law, F, Q, 1.0, 0.0, 1, 0), hd::config_error);
    REQUIRE_THROWS_AS(hd::integrate_bounded(law, F, Q, 0.105, 0.01, 1, 0), hd::config_error);
    REQUIRE_THROWS_AS(hd::integrate_bounded(law, F, Q, 1.0, 0.01, 0, 0), hd::config_error);
    REQUIRE_THROWS_AS(hd::integrate_bounded(law, hd::drift_model::zero(2), Q, 1.0, 0.01, 1, 0),
                      hd::config_error);

    hd::integrate_options bad_record;
    bad_record.record = {0, 200};
    REQUIRE_THROWS_AS(hd::integrate_bounded(law, F, Q, 1.0, 0.01, 1, 0, bad_record),
                      hd::grid_error);

    const auto A = hd::linear_operator::heat(3);
    hd::integrate_options subs;
    subs.substeps = 2;
    REQUIRE_THROWS_AS(hd::integrate_mild(law, A, F, Q, 1.0, 0.01, 1, 0, subs),
                      hd::config_error);

    const auto batch = hd::integrate_bounded(law, F, Q, 1.0, 0.01, 1, 0);
    REQUIRE_THROWS_AS(batch.index_of_time(0.555), hd::grid_error);
    REQUIRE_THROWS_AS(batch.slot_of_time(0.55), hd::grid_error);  // on-grid, unrecorded
}

TEST_CASE("a drift registry bug surfaces as a numerical abort with provenance") {
    const auto Q = hd::covariance_spectrum::poly2(2);
    const auto law = hd::initial_law::dirac({0.0, 0.0});
    hd::drift_model bad = hd::drift_model::zero(2);
    bad.eval = [](const hd::vec&, hd::vec& out) {
        out[0] = std::numeric_limits<double>::quiet_NaN();
        out[1] = 0.0;
    };
    try {
        hd::integrate_bounded(law, bad, Q, 1.0, 0.01, 1, 0);
        FAIL("expected numerical_abort");
    } catch (const hd::numerical_abort& e) {
        REQUIRE(e.module_name == "sde_engine");
    }
}
