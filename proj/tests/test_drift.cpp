#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "hilbert_diffuse/drift.hpp"
#include "hilbert_diffuse/stats.hpp"

TEST_CASE("drift presets respect their stored sup norms everywhere") {
    const auto Q = hd::covariance_spectrum::poly2(10);
    const auto models = {hd::drift_model::zero(Q.dim), hd::drift_model::constant(-1.7, Q.dim),
                         hd::drift_model::tanh_drift(Q), hd::drift_model::sinstep(Q)};
    hd::noise_stream s(3, 0);
    std::uint64_t cur = 0;
    hd::vec x(Q.dim), f(Q.dim);
    for (const auto& F : models) {
        for (int i = 0; i < 100000; ++i) {
            for (auto& c : x) c = 10.0 * s.normal(cur++);
            F.eval(x, f);
            REQUIRE(hd::h_norm(f) <= F.sup_h + 1e-12);
            REQUIRE(hd::q_norm(f, Q) <= F.sup_q + 1e-12);
        }
    }
}

TEST_CASE("tanh preset: values and near-attained suprema") {
    const auto Q = hd::covariance_spectrum::geom2(6);
    const auto F = hd::drift_model::tanh_drift(Q);
    hd::vec x(Q.dim, 0.7), f(Q.dim);
    F.eval(x, f);
    for (std::size_t j = 0; j < Q.dim; ++j)
        REQUIRE(f[j] == Catch::Approx(Q.q[j] * std::tanh(0.7)).epsilon(1e-15));

    double s2 = 0.0, s3 = 0.0;
    for (double q : Q.q) {
        s2 += q * q;
        s3 += q * q * q;
    }
    REQUIRE(F.sup_h == Catch::Approx(std::sqrt(s2)).epsilon(1e-15));
    REQUIRE(F.sup_q == Catch::Approx(std::sqrt(s3)).epsilon(1e-15));

    // The bound is approached as all coordinates grow.
    hd::vec big(Q.dim, 25.0);
    F.eval(big, f);
    REQUIRE(hd::h_norm(f) == Catch::Approx(F.sup_h).epsilon(1e-12));
    REQUIRE(F.is_lipschitz);
}

TEST_CASE("sinstep preset: driven by the first coordinate, sup attained") {
    const auto Q = hd::covariance_spectrum::poly2(5);
    const auto F = hd::drift_model::sinstep(Q);
    REQUIRE_FALSE(F.is_lipschitz);
    hd::vec x(Q.dim, 0.0), f(Q.dim);
    x[0] = std::numbers::pi / 2.0;  // sin = 1, the plateau of min(1, sqrt|sin|)
    F.eval(x, f);
    for (std::size_t j = 0; j < Q.dim; ++j) REQUIRE(f[j] == Catch::Approx(Q.q[j]).epsilon(1e-12));
    REQUIRE(hd::h_norm(f) == Catch::Approx(F.sup_h).epsilon(1e-12));
    x[0] = 0.0;  // sin = 0
    F.eval(x, f);
    REQUIRE(hd::h_norm(f) == 0.0);
}

TEST_CASE("shifted drift evaluates the base drift at x - a") {
    const auto Q = hd::covariance_spectrum::poly2(4);
    const auto F = hd::drift_model::tanh_drift(Q);
    hd::vec a = {1.0, -2.0, 0.5, 0.0};
    const auto Fs = F.shifted_by(a);
    REQUIRE(Fs.sup_h == F.sup_h);
    REQUIRE(Fs.sup_q == F.sup_q);
    hd::noise_stream s(9, 1);
    std::uint64_t cur = 0;
    hd::vec x(Q.dim), xm(Q.dim), f1(Q.dim), f2(Q.dim);
    for (int i = 0; i < 1000; ++i) {
        for (std::size_t j = 0; j < Q.dim; ++j) {
            x[j] = 3.0 * s.normal(cur++);
            xm[j] = x[j] - a[j];
        }
        Fs.eval(x, f1);
        F.eval(xm, f2);
        REQUIRE(f1 == f2);
    }
}

TEST_CASE("operator presets and validation") {
    const auto heat = hd::linear_operator::heat(5);
    REQUIRE(heat.a == hd::vec{1.0, 4.0, 9.0, 16.0, 25.0});
    REQUIRE(heat.epsilon == 1.0);

    const auto sg = hd::linear_operator::shifted_gap(4, 0.25);
    REQUIRE(sg.a == hd::vec{0.25, 1.25, 2.25, 3.25});
    REQUIRE(sg.epsilon == 0.25);

    REQUIRE_THROWS_AS(hd::linear_operator({1.0, 0.0}), hd::config_error);
    REQUIRE_THROWS_AS(hd::linear_operator({}), hd::config_error);
    REQUIRE_THROWS_AS(hd::linear_operator::shifted_gap(3, 0.0), hd::config_error);
}

TEST_CASE("dirac law returns its point without consuming draws") {
    const auto law = hd::initial_law::dirac({2.0, 0.0, -1.0});
    hd::noise_stream s(1, 0);
    std::uint64_t cur = 0;
    REQUIRE(law.sample(s, cur) == hd::vec{2.0, 0.0, -1.0});
    REQUIRE(cur == 0);
}

TEST_CASE("gaussian law has the requested moments") {
    const auto law = hd::initial_law::gaussian({1.0, -2.0}, {4.0, 0.25});
    hd::noise_stream s(21, 7);
    std::uint64_t cur = 0;
    hd::running_moments m0, m1;
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = law.sample(s, cur);
        m0.add(x[0]);
        m1.add(x[1]);
    }
    REQUIRE(std::fabs(m0.mean() - 1.0) <= 4.0 * m0.stderr_mean());
    REQUIRE(std::fabs(m1.mean() + 2.0) <= 4.0 * m1.stderr_mean());
    REQUIRE(std::fabs(m0.variance() - 4.0) <= 4.0 * 4.0 * std::sqrt(2.0 / double(n)));
    REQUIRE(std::fabs(m1.variance() - 0.25) <= 4.0 * 0.25 * std::sqrt(2.0 / double(n)));
    REQUIRE_THROWS_AS(hd::initial_law::gaussian({0.0}, {-1.0}), hd::config_error);
}

TEST_CASE("shell law respects its support and parameter constraints") {
    const auto Q = hd::covariance_spectrum::geom2(8);
    const auto law = hd::initial_law::shell(2.0, 0.5, Q);
    const hd::ellipsoid K(hd::vec(Q.dim, 0.0), 0.5, Q);
    const hd::ball U(hd::vec(Q.dim, 0.0), 2.0);
    hd::noise_stream s(33, 0);
    std::uint64_t cur = 0;
    for (int i = 0; i < 5000; ++i) {
        const auto x = law.sample(s, cur);
        REQUIRE(U.contains(x));
        REQUIRE_FALSE(K.contains(x));
    }
    REQUIRE_THROWS_AS(hd::initial_law::shell(0.5, 0.5, Q), hd::config_error);
}

TEST_CASE("empirical law only emits members of its sample set") {
    const std::vector<hd::vec> data = {{1.0, 1.0}, {2.0, 0.0}, {-1.0, 3.0}};
    const auto law = hd::initial_law::empirical(data);
    hd::noise_stream s(5, 5);
    std::uint64_t cur = 0;
    std::vector<int> seen(data.size(), 0);
    for (int i = 0; i < 3000; ++i) {
        const auto x = law.sample(s, cur);
        const auto it = std::find(data.begin(), data.end(), x);
        REQUIRE(it != data.end());
        ++seen[std::size_t(it - data.begin())];
    }
    for (int c : seen) REQUIRE(c > 800);  // roughly uniform across 3 atoms
    REQUIRE_THROWS_AS(hd::initial_law::empirical({}), hd::config_error);
}

TEST_CASE("shifted law translates every sample") {
    const auto Q = hd::covariance_spectrum::poly2(3);
    const auto base = hd::initial_law::gaussian({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0});
    const hd::vec a = {5.0, -1.0, 2.0};
    const auto shifted = base.shifted_by(a);
    hd::noise_stream s(8, 2);
    for (int i = 0; i < 200; ++i) {
        std::uint64_t c1 = 0, c2 = 0;
        const auto x = base.sample(s, c1);
        const auto y = shifted.sample(s, c2);
        REQUIRE(c1 == c2);
        for (std::size_t j = 0; j < 3; ++j) REQUIRE(y[j] == x[j] + a[j]);
    }
}
