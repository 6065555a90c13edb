// The model registry: bounded drift presets with exact analytic sup norms,
// diagonal negative operators with a spectral gap, and initial laws.
//
// The sup norms matter more than the drift values themselves: the staying
// time tau(R) is computed from sup ||F|| / sup ||F||_Q, so presets carry
// those bounds in closed form instead of estimating them.
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hilbert_diffuse/errors.hpp"
#include "hilbert_diffuse/spectral_space.hpp"

namespace hd {

struct drift_model {
    std::string name;
    std::size_t dim = 0;
    double sup_h = 0.0;      // sup_x ||F(x)||
    double sup_q = 0.0;      // sup_x ||F(x)||_Q
    bool is_lipschitz = true;
    std::function<void(const vec&, vec&)> eval;

    void operator()(const vec& x, vec& out) const {
        out.resize(dim);
        eval(x, out);
    }

    // F identically zero.
    static drift_model zero(std::size_t d) {
        drift_model m;
        m.name = "zero";
        m.dim = d;
        m.eval = [](const vec&, vec& out) { std::fill(out.begin(), out.end(), 0.0); };
        return m;
    }

    // F identically c e_1.
    static drift_model constant(double c, std::size_t d) {
        drift_model m;
        m.name = "const";
        m.dim = d;
        m.sup_h = std::fabs(c);
        m.sup_q = std::fabs(c);  // q_1 = 1
        m.eval = [c](const vec&, vec& out) {
            std::fill(out.begin(), out.end(), 0.0);
            out[0] = c;
        };
        return m;
    }

    // F_j(x) = q_j tanh(x_j): Lipschitz, bounded coordinatewise by q_j,
    // with the suprema attained in the limit |x_j| -> inf:
    //   sup ||F|| = (sum q_j^2)^(1/2),  sup ||F||_Q = (sum q_j^3)^(1/2).
    static drift_model tanh_drift(const covariance_spectrum& Q) {
        drift_model m;
        m.name = "tanh";
        m.dim = Q.dim;
        double s2 = 0.0, s3 = 0.0;
        for (double q : Q.q) {
            s2 += q * q;
            s3 += q * q * q;
        }
        m.sup_h = std::sqrt(s2);
        m.sup_q = std::sqrt(s3);
        const vec kappa = Q.q;
        m.eval = [kappa](const vec& x, vec& out) {
            for (std::size_t j = 0; j < kappa.size(); ++j) out[j] = kappa[j] * std::tanh(x[j]);
        };
        return m;
    }

    // F_j(x) = q_j min(1, sqrt|sin x_1|): bounded but not Lipschitz (the
    // square root has unbounded slope at the zeros of sin). Same suprema as
    // the tanh preset, attained where |sin x_1| = 1.
    static drift_model sinstep(const covariance_spectrum& Q) {
        drift_model m = tanh_drift(Q);
        m.name = "sinstep";
        m.is_lipschitz = false;
        const vec kappa = Q.q;
        m.eval = [kappa](const vec& x, vec& out) {
            const double g = std::min(1.0, std::sqrt(std::fabs(std::sin(x[0]))));
            for (std::size_t j = 0; j < kappa.size(); ++j) out[j] = kappa[j] * g;
        };
        return m;
    }

    // x -> F(x - a); the sup norms are shift invariant.
    drift_model shifted_by(vec a) const {
        if (a.size() != dim) throw config_error("drift shift: dimension mismatch");
        drift_model m = *this;
        m.name = name + "(shifted)";
        auto base = eval;
        m.eval = [base, a = std::move(a), buf = vec()](const vec& x, vec& out) mutable {
            buf.resize(x.size());
            for (std::size_t j = 0; j < x.size(); ++j) buf[j] = x[j] - a[j];
            base(buf, out);
        };
        return m;
    }
};

// Diagonal negative operator: A acts as -a_j on coordinate j, all a_j >=
// epsilon > 0, so the semigroup factors are e^{-a_j t}.
struct linear_operator {
    vec a;
    double epsilon = 0.0;
    std::string name;

    linear_operator(vec a_in, std::string preset = "custom")
        : a(std::move(a_in)), name(std::move(preset)) {
        if (a.empty()) throw config_error("operator: empty coefficient list");
        epsilon = a.front();
        for (double v : a) {
            if (!(v > 0.0)) throw config_error("operator: coefficients must be positive");
            epsilon = std::min(epsilon, v);
        }
    }

    // a_j = j^2 (heat-equation modes).
    static linear_operator heat(std::size_t d) {
        vec a(d);
        for (std::size_t j = 0; j < d; ++j) a[j] = double(j + 1) * double(j + 1);
        return linear_operator(std::move(a), "heat");
    }

    // a_j = eps + (j - 1): spectral gap exactly eps.
    static linear_operator shifted_gap(std::size_t d, double eps) {
        if (!(eps > 0.0)) throw config_error("operator: spectral gap must be positive");
        vec a(d);
        for (std::size_t j = 0; j < d; ++j) a[j] = eps + double(j);
        return linear_operator(std::move(a), "shifted");
    }
};

// Initial law: a named deterministic sampler. Sampling consumes draws from
// the per-path initial-condition stream starting at the given cursor, so
// variable-consumption samplers (shell rejection) stay reproducible.
struct initial_law {
    std::string name;
    std::size_t dim = 0;
    std::function<vec(const noise_stream&, std::uint64_t&)> sampler;

    vec sample(const noise_stream& s, std::uint64_t& cursor) const { return sampler(s, cursor); }

    static initial_law dirac(vec point) {
        initial_law l;
        l.name = "dirac";
        l.dim = point.size();
        l.sampler = [p = std::move(point)](const noise_stream&, std::uint64_t&) { return p; };
        return l;
    }

    static initial_law gaussian(vec mean, vec variances) {
        if (mean.size() != variances.size())
            throw config_error("gaussian law: mean/variance dimension mismatch");
        for (double v : variances)
            if (!(v >= 0.0)) throw config_error("gaussian law: variances must be nonnegative");
        initial_law l;
        l.name = "gaussian";
        l.dim = mean.size();
        l.sampler = [mean = std::move(mean), sd = [&] {
            vec s(variances.size());
            for (std::size_t j = 0; j < s.size(); ++j) s[j] = std::sqrt(variances[j]);
            return s;
        }()](const noise_stream& s, std::uint64_t& cur) {
            vec x(mean.size());
            for (std::size_t j = 0; j < x.size(); ++j) x[j] = mean[j] + sd[j] * s.normal(cur++);
            return x;
        };
        return l;
    }

    // Uniform on the shell U_N \ K_delta (the reduction used by the
    // positivity argument); requires N > delta > 0.
    static initial_law shell(double N, double delta, covariance_spectrum Q) {
        if (!(N > delta && delta > 0.0))
            throw config_error("shell law: requires N > delta > 0");
        initial_law l;
        l.name = "shell";
        l.dim = Q.dim;
        l.sampler = [N, delta, Q = std::move(Q)](const noise_stream& s, std::uint64_t& cur) {
            return sample_shell_uniform(N, delta, Q, s, cur);
        };
        return l;
    }

    static initial_law empirical(std::vector<vec> samples) {
        if (samples.empty()) throw config_error("empirical law: no samples");
        initial_law l;
        l.name = "empirical";
        l.dim = samples.front().size();
        auto data = std::make_shared<std::vector<vec>>(std::move(samples));
        l.sampler = [data](const noise_stream& s, std::uint64_t& cur) {
            const auto n = data->size();
            auto i = static_cast<std::size_t>(s.uniform(cur++) * double(n));
            if (i >= n) i = n - 1;
            return (*data)[i];
        };
        return l;
    }

    // The law of X + a for X distributed per this law.
    initial_law shifted_by(vec a) const {
        if (a.size() != dim) throw config_error("law shift: dimension mismatch");
        initial_law l = *this;
        l.name = name + "(shifted)";
        auto base = sampler;
        l.sampler = [base, a = std::move(a)](const noise_stream& s, std::uint64_t& cur) {
            vec x = base(s, cur);
            for (std::size_t j = 0; j < x.size(); ++j) x[j] += a[j];
            return x;
        };
        return l;
    }
};

}  // namespace hd
