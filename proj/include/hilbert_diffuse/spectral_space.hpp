// Geometry of the truncated Hilbert space: covariance spectra with
// normalized leading eigenvalue, the plain and weighted norms, closed
// Q-norm ellipsoids and H-norm balls, and the samplers the property tests
// use. Coordinates are taken in the eigenbasis of the covariance operator,
// so the basis itself never appears: x_j = <x, e_j>.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hilbert_diffuse/errors.hpp"
#include "hilbert_diffuse/rng.hpp"

namespace hd {

using vec = std::vector<double>;

// Diagonal covariance spectrum q_1 = 1 >= q_2 >= ... > 0, truncated to d
// modes. trace_full carries the analytic trace of the untruncated sequence
// when the preset has one, so truncation error can be reported.
struct covariance_spectrum {
    std::size_t dim = 0;
    vec q;
    std::optional<double> trace_full;
    std::string name = "custom";

    covariance_spectrum(vec q_in, std::optional<double> full = std::nullopt,
                        std::string preset = "custom")
        : dim(q_in.size()), q(std::move(q_in)), trace_full(full), name(std::move(preset)) {
        if (dim == 0) throw config_error("spectrum: empty eigenvalue list");
        if (q.front() != 1.0) throw config_error("spectrum: q_1 must equal 1");
        for (std::size_t j = 0; j < dim; ++j) {
            if (!(q[j] > 0.0)) throw config_error("spectrum: eigenvalues must be positive");
            if (j + 1 < dim && q[j + 1] > q[j])
                throw config_error("spectrum: eigenvalues must be nonincreasing");
        }
        if (trace_full && trace() > *trace_full + 1e-12)
            throw config_error("spectrum: truncated trace exceeds the full trace");
    }

    // q_j = j^-2; full trace pi^2/6.
    static covariance_spectrum poly2(std::size_t d) {
        vec q(d);
        for (std::size_t j = 0; j < d; ++j) q[j] = 1.0 / (double(j + 1) * double(j + 1));
        return covariance_spectrum(std::move(q), std::numbers::pi * std::numbers::pi / 6.0, "poly2");
    }

    // q_j = 2^(1-j); full trace 2.
    static covariance_spectrum geom2(std::size_t d) {
        vec q(d);
        for (std::size_t j = 0; j < d; ++j) q[j] = std::ldexp(1.0, -int(j));
        return covariance_spectrum(std::move(q), 2.0, "geom2");
    }

    double trace() const {
        double s = 0.0;
        for (double v : q) s += v;
        return s;
    }
};

inline void require_dim(const vec& x, std::size_t d, const char* where) {
    if (x.size() != d) throw config_error(std::string(where) + ": dimension mismatch");
}

inline double dot(const vec& x, const vec& y) {
    if (x.size() != y.size()) throw config_error("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * y[j];
    return s;
}

inline double h_norm(const vec& x) { return std::sqrt(dot(x, x)); }

// Weighted norm ||x||_Q = (sum q_j x_j^2)^(1/2) <= ||x|| since q_j <= 1.
inline double q_norm(const vec& x, const covariance_spectrum& Q) {
    require_dim(x, Q.dim, "q_norm");
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += Q.q[j] * x[j] * x[j];
    return std::sqrt(s);
}

// Closed Q-norm ball K_R(a): membership iff ||x - a||_Q <= R, boundary in.
struct ellipsoid {
    vec center;
    double radius;
    covariance_spectrum spectrum;

    ellipsoid(vec a, double R, covariance_spectrum Q)
        : center(std::move(a)), radius(R), spectrum(std::move(Q)) {
        if (!(radius > 0.0)) throw config_error("ellipsoid: radius must be positive");
        require_dim(center, spectrum.dim, "ellipsoid");
    }

    bool contains(const vec& x) const {
        require_dim(x, spectrum.dim, "ellipsoid::contains");
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double d = x[j] - center[j];
            s += spectrum.q[j] * d * d;
        }
        return s <= radius * radius;
    }
};

// Closed H-norm ball U_R(a).
struct ball {
    vec center;
    double radius;

    ball(vec a, double R) : center(std::move(a)), radius(R) {
        if (!(radius > 0.0)) throw config_error("ball: radius must be positive");
    }

    bool contains(const vec& x) const {
        require_dim(x, center.size(), "ball::contains");
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double d = x[j] - center[j];
            s += d * d;
        }
        return s <= radius * radius;
    }
};

// The half-radius ellipsoid shifted along e_1: K_{R/2}(a + eps e_1). Every
// member lies in K_R(a) because ||x - a||_Q <= R/2 + eps ||e_1||_Q and
// q_1 = 1, provided eps <= R/2.
inline ellipsoid inner_shifted(const ellipsoid& K, double eps) {
    if (!(eps >= 0.0)) throw precondition_error("inner_shifted: eps must be nonnegative");
    if (eps > K.radius / 2.0)
        throw precondition_error("inner_shifted: containment needs eps <= R/2");
    vec c = K.center;
    c[0] += eps;
    return ellipsoid(std::move(c), K.radius / 2.0, K.spectrum);
}

// --- Samplers (property tests and initial laws). Each consumes draws from
// the given stream starting at *cursor and advances the cursor, so variable
// consumption (rejection) stays deterministic per (stream, starting cursor).

// Uniform on the closed H-ball U_R(a): Gaussian direction, radius R u^{1/d}.
inline vec sample_ball_uniform(const vec& a, double R, const noise_stream& s,
                               std::uint64_t& cursor) {
    const std::size_t d = a.size();
    vec x(d);
    double n2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        x[j] = s.normal(cursor++);
        n2 += x[j] * x[j];
    }
    const double r = R * std::pow(s.uniform(cursor++), 1.0 / double(d));
    const double scale = (n2 > 0.0) ? r / std::sqrt(n2) : 0.0;
    for (std::size_t j = 0; j < d; ++j) x[j] = a[j] + scale * x[j];
    return x;
}

// Uniform on the ellipsoid K_R(a): uniform on the ball in the rescaled
// coordinates y_j = sqrt(q_j) x_j, mapped back.
inline vec sample_ellipsoid_uniform(const ellipsoid& K, const noise_stream& s,
                                    std::uint64_t& cursor) {
    const std::size_t d = K.spectrum.dim;
    vec y = sample_ball_uniform(vec(d, 0.0), K.radius, s, cursor);
    for (std::size_t j = 0; j < d; ++j)
        y[j] = K.center[j] + y[j] / std::sqrt(K.spectrum.q[j]);
    return y;
}

// Uniform on the shell U_N \ K_delta (both centered at 0): rejection from
// the ball. Requires N > delta > 0; geometry with vanishing acceptance is
// aborted rather than looping forever.
inline vec sample_shell_uniform(double N, double delta, const covariance_spectrum& Q,
                                const noise_stream& s, std::uint64_t& cursor) {
    if (!(N > delta && delta > 0.0))
        throw config_error("shell: requires N > delta > 0");
    const vec origin(Q.dim, 0.0);
    const ellipsoid K(origin, delta, Q);
    for (int attempt = 0; attempt < 1000000; ++attempt) {
        vec x = sample_ball_uniform(origin, N, s, cursor);
        if (!K.contains(x)) return x;
    }
    throw numerical_abort("spectral_space", "shell sampler: acceptance region too thin");
}

}  // namespace hd
