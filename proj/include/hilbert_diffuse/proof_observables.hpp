// Observables of the norm-squared decomposition for bounded-drift runs.
//
// For X advanced by X_{k+1} = X_k + dW_k + h F(X_k) and zeta = ||X||^2, each
// step satisfies (exactly, in exact arithmetic)
//
//   zeta_{k+1} - zeta_k = v_k dw_k + 2h <X_k, F_k> + ||dW_k + h F_k||^2
//
// where dw_k = <X_k, dW_k> / ||X_k||_Q is the increment of the projected
// scalar martingale w and v_k = 2 ||X_k||_Q, so that v_k dw_k = 2 <X_k, dW_k>.
// Summing with 2<X,F> <= ||X||^2 + sup||F||^2 gives the pathwise bound
//
//   zeta_k <= Psi_k + h sum_{i<k} zeta_i + E_k,
//   Psi_k  = zeta_0 + t_k lambda + sum_{i<k} v_i dw_i,
//   lambda = tr Q + sup||F||^2   (truncated trace),
//   E_k    = sum_{i<k} (||dW_i + h F_i||^2 - h tr Q),
//
// which proof_diagnostics checks per path up to accumulated rounding. The
// quadratic variation sum (dw)^2 concentrates at t, the exponentially
// weighted integral sum e^{-s_i} v_i dw_i admits a uniform lower bound
// -C(N,T) for initial laws in the N-ball, and z_k = sum e^{-2 s_i} v_i^2 h
// is the clock of the associated time change. All sums are left-point Ito
// sums on the integrator's own grid with the integrator's own noise.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hilbert_diffuse/drift.hpp"
#include "hilbert_diffuse/errors.hpp"
#include "hilbert_diffuse/rng.hpp"
#include "hilbert_diffuse/sde_engine.hpp"
#include "hilbert_diffuse/spectral_space.hpp"
#include "hilbert_diffuse/stats.hpp"
#include "hilbert_diffuse/trajectory.hpp"

namespace hd {

// ||(x / ||x||_Q) Q^{1/2}||^2, computed coordinate-wise; identically 1.
inline double normalized_projection_weight(const vec& x, const covariance_spectrum& Q) {
    const double nq = q_norm(x, Q);
    if (nq == 0.0) throw precondition_error("projection weight: zero Q-norm vector");
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double y = x[j] / nq;
        s += Q.q[j] * y * y;
    }
    return s;
}

// zeta series per path over the recorded slots: zeta = ||X||^2.
inline std::vector<std::vector<double>> zeta_path(const trajectory_batch& batch) {
    std::vector<std::vector<double>> zeta(batch.n_paths);
    for (std::size_t p = 0; p < batch.n_paths; ++p) {
        zeta[p].resize(batch.record_indices.size());
        for (std::size_t s = 0; s < batch.record_indices.size(); ++s) {
            const double* x = batch.state(s, p);
            double acc = 0.0;
            for (std::size_t j = 0; j < batch.dim; ++j) acc += x[j] * x[j];
            zeta[p][s] = acc;
        }
    }
    return zeta;
}

struct gronwall_constants {
    double lambda;  // tr Q (truncated) + sup ||F||^2
    double C;       // (N^2 + T lambda) (1 + T e^T)
};

// The uniform constant bounding the weighted martingale integral from below
// for initial laws supported in the N-ball.
inline gronwall_constants c_constant(double N, double T, const covariance_spectrum& Q,
                                     const drift_model& F) {
    if (!(N > 0.0) || !(T > 0.0))
        throw precondition_error("c_constant: N and T must be positive");
    gronwall_constants g;
    g.lambda = Q.trace() + F.sup_h * F.sup_h;
    g.C = (N * N + T * g.lambda) * (1.0 + T * std::exp(T));
    return g;
}

// Streaming per-path diagnostics, attached as an observer to
// integrate_bounded. Writes only to slots indexed by the path, so it is safe
// under any worker count; aggregates are computed afterwards in path order.
class proof_diagnostics {
public:
    struct path_stats {
        double qv = 0.0;       // sum (dw)^2, target ~ T
        double w = 0.0;        // sum dw
        double z = 0.0;        // sum e^{-2 s_i} v_i^2 h, nondecreasing
        double running_lb = 0.0;
        double min_lb = 0.0;   // min over grid (incl. t = 0) of sum e^{-s_i} v_i dw_i
        double zeta0 = 0.0;
        double zeta_final = 0.0;
        double sum_vdw = 0.0;
        double sum_zeta_h = 0.0;
        double sum_excess = 0.0;
        double gronwall_slack = -std::numeric_limits<double>::infinity();
        std::uint32_t degenerate = 0;  // steps with ||X||_Q = 0 (dw skipped)
    };

    // check_gronwall must be false for batches not produced by the
    // Euler-Maruyama scheme (the bound above is specific to its recursion).
    // Paths p < series_limit additionally record full zeta/w/z series.
    proof_diagnostics(const covariance_spectrum& Q, const drift_model& F, double h,
                      std::size_t n_paths, bool check_gronwall = true,
                      std::size_t series_limit = 0)
        : q_(Q.q),
          h_(h),
          trace_(Q.trace()),
          lambda_(Q.trace() + F.sup_h * F.sup_h),
          check_gronwall_(check_gronwall),
          stats_(n_paths),
          series_limit_(std::min(series_limit, n_paths)) {
        if (!(h > 0.0)) throw precondition_error("diagnostics: step must be positive");
        zeta_series_.resize(series_limit_);
        w_series_.resize(series_limit_);
        z_series_.resize(series_limit_);
    }

    void start_path(std::size_t p, const vec& x0) {
        auto& s = stats_[p];
        s = path_stats{};
        double z0 = 0.0;
        for (double c : x0) z0 += c * c;
        s.zeta0 = s.zeta_final = z0;
        if (p < series_limit_) {
            zeta_series_[p].assign(1, z0);
            w_series_[p].assign(1, 0.0);
            z_series_[p].assign(1, 0.0);
        }
    }

    void step(std::size_t p, std::size_t k, const vec& x, const vec& dw, const vec& fx,
              const vec& x_next) {
        auto& s = stats_[p];
        const double t_k = double(k) * h_;
        double dot_h = 0.0, q2 = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            dot_h += x[j] * dw[j];
            q2 += q_[j] * x[j] * x[j];
        }
        const double nq = std::sqrt(q2);
        if (nq > 0.0) {
            const double dwp = dot_h / nq;
            s.qv += dwp * dwp;
            s.w += dwp;
        } else {
            ++s.degenerate;
        }
        const double vdw = 2.0 * dot_h;  // v dw = 2 <X, dW> even at ||X||_Q = 0
        s.running_lb += std::exp(-t_k) * vdw;
        s.min_lb = std::min(s.min_lb, s.running_lb);
        s.z += std::exp(-2.0 * t_k) * 4.0 * q2 * h_;
        if (check_gronwall_) {
            double zeta_k = 0.0, zeta_n = 0.0, e2 = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                zeta_k += x[j] * x[j];
                zeta_n += x_next[j] * x_next[j];
                const double u = dw[j] + h_ * fx[j];
                e2 += u * u;
            }
            s.sum_vdw += vdw;
            s.sum_zeta_h += h_ * zeta_k;
            s.sum_excess += e2 - h_ * trace_;
            const double bound = s.zeta0 + (double(k) + 1.0) * h_ * lambda_ + s.sum_vdw +
                                 s.sum_zeta_h + s.sum_excess;
            s.gronwall_slack = std::max(s.gronwall_slack, zeta_n - bound);
        }
        if (p < series_limit_) {
            double zn = 0.0;
            for (double c : x_next) zn += c * c;
            zeta_series_[p].push_back(zn);
            w_series_[p].push_back(s.w);
            z_series_[p].push_back(s.z);
        }
    }

    void end_path(std::size_t p, const vec& xT) {
        double z = 0.0;
        for (double c : xT) z += c * c;
        stats_[p].zeta_final = z;
    }

    const std::vector<path_stats>& paths() const { return stats_; }
    const std::vector<double>& zeta_series(std::size_t p) const { return zeta_series_.at(p); }
    const std::vector<double>& w_series(std::size_t p) const { return w_series_.at(p); }
    const std::vector<double>& z_series(std::size_t p) const { return z_series_.at(p); }

    // Aggregates, accumulated in path order (deterministic for any jobs).
    running_moments qv_moments() const {
        running_moments m;
        for (const auto& s : stats_) m.add(s.qv);
        return m;
    }
    running_moments w_moments() const {
        running_moments m;
        for (const auto& s : stats_) m.add(s.w);
        return m;
    }
    running_moments zeta_final_moments() const {
        running_moments m;
        for (const auto& s : stats_) m.add(s.zeta_final);
        return m;
    }
    double min_lower_bound() const {
        double v = 0.0;
        for (const auto& s : stats_) v = std::min(v, s.min_lb);
        return v;
    }
    std::uint64_t total_degenerate() const {
        std::uint64_t n = 0;
        for (const auto& s : stats_) n += s.degenerate;
        return n;
    }
    double max_gronwall_slack() const {
        double v = -std::numeric_limits<double>::infinity();
        for (const auto& s : stats_) v = std::max(v, s.gronwall_slack);
        return v;
    }

private:
    vec q_;
    double h_;
    double trace_;
    double lambda_;
    bool check_gronwall_;
    std::vector<path_stats> stats_;
    std::size_t series_limit_;
    std::vector<std::vector<double>> zeta_series_, w_series_, z_series_;
};

namespace detail {

inline void require_full_euler_record(const trajectory_batch& b, const char* who) {
    if (b.scheme != "euler_maruyama")
        throw config_error(std::string(who) + ": batch noise record requires the "
                                              "Euler-Maruyama scheme");
    if (b.record_indices.size() != b.steps + 1)
        throw grid_error(std::string(who) + ": batch must record every grid index");
}

}  // namespace detail

struct increment_series {
    std::vector<std::vector<double>> dw;    // [path][step]; skipped steps hold 0
    std::vector<std::uint32_t> degenerate;  // per-path count of skipped steps
};

// Recompute the projected-martingale increments dw of a fully recorded
// Euler-Maruyama batch from its own regenerated noise.
inline increment_series projected_martingale(const trajectory_batch& b,
                                             const covariance_spectrum& Q) {
    detail::require_full_euler_record(b, "projected_martingale");
    if (b.dim != Q.dim) throw config_error("projected_martingale: spectrum dimension mismatch");
    increment_series out;
    out.dw.assign(b.n_paths, std::vector<double>(b.steps, 0.0));
    out.degenerate.assign(b.n_paths, 0);
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        for (std::size_t k = 0; k < b.steps; ++k) {
            const double* x = b.state(k, p);
            const vec dW = b.noise_increment(p, k);
            double dot_h = 0.0, q2 = 0.0;
            for (std::size_t j = 0; j < b.dim; ++j) {
                dot_h += x[j] * dW[j];
                q2 += Q.q[j] * x[j] * x[j];
            }
            const double nq = std::sqrt(q2);
            if (nq > 0.0)
                out.dw[p][k] = dot_h / nq;
            else
                ++out.degenerate[p];
        }
    }
    return out;
}

inline double quadratic_variation(const std::vector<double>& dw) {
    double s = 0.0;
    for (double d : dw) s += d * d;
    return s;
}

// Per-path min over the grid of sum e^{-s_i} v_i dw_i for a fully recorded
// Euler-Maruyama batch; mirrors proof_diagnostics::min_lb exactly.
inline std::vector<double> lower_bound_statistic(const trajectory_batch& b,
                                                 const covariance_spectrum& Q) {
    detail::require_full_euler_record(b, "lower_bound_statistic");
    std::vector<double> out(b.n_paths);
    for (std::size_t p = 0; p < b.n_paths; ++p) {
        double lb = 0.0, lo = 0.0;
        for (std::size_t k = 0; k < b.steps; ++k) {
            const double* x = b.state(k, p);
            const vec dW = b.noise_increment(p, k);
            double dot_h = 0.0;
            for (std::size_t j = 0; j < b.dim; ++j) dot_h += x[j] * dW[j];
            lb += std::exp(-double(k) * b.h) * 2.0 * dot_h;
            lo = std::min(lo, lb);
        }
        out[p] = lo;
    }
    return out;
}

struct first_passage {
    double gamma;
    std::size_t index;  // first grid index with z >= gamma; z.size() if never
    bool reached;
};

struct time_change_result {
    std::vector<double> z;  // z[0] = 0, size steps + 1, nondecreasing
    std::vector<first_passage> tau;
};

// Time-change clock z_k = sum_{i<k} e^{-2 s_i} v_i^2 h for one path's v
// series, plus first-passage indices for the requested levels.
inline time_change_result time_change(const std::vector<double>& v, double h,
                                      const std::vector<double>& gammas = {}) {
    if (!(h > 0.0)) throw precondition_error("time_change: step must be positive");
    for (double vi : v)
        if (!(vi >= 0.0)) throw precondition_error("time_change: v must be nonnegative");
    time_change_result r;
    r.z.resize(v.size() + 1);
    r.z[0] = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k)
        r.z[k + 1] = r.z[k] + std::exp(-2.0 * double(k) * h) * v[k] * v[k] * h;
    for (double g : gammas) {
        first_passage fp{g, r.z.size(), false};
        for (std::size_t i = 0; i < r.z.size(); ++i)
            if (r.z[i] >= g) {
                fp.index = i;
                fp.reached = true;
                break;
            }
        r.tau.push_back(fp);
    }
    return r;
}

struct novikov_report {
    std::size_t n_paths = 0;
    double T = 0.0, h = 0.0;
    // residual = max over paths of |integral - (u_T - 1)|
    double max_residual_euler = 0.0;
    double max_residual_corrected = 0.0;
    // min over paths and grid times of the running integral
    double min_integral_euler = 0.0;
    double min_integral_corrected = 0.0;
    double min_u = 1.0;  // min over paths and grid times of u itself
};

// The positive exponential martingale u_t = exp(w_t - t/2) driven by a
// scalar standard Wiener path: checks the identity int u dw = u_T - 1 under
// both the plain left-point sum and the variance-corrected sum
// sum u_i dw_i + (1/2) u_i ((dw_i)^2 - h), and records how far the running
// integral dips (it never goes below -1) and how small u itself gets.
inline novikov_report novikov_demo(double T, double h, std::size_t n_paths,
                                   std::uint64_t seed, std::uint64_t stream_base = 0) {
    if (n_paths == 0) throw config_error("novikov: need at least one path");
    const std::size_t steps = detail::grid_steps(T, h);
    novikov_report r;
    r.n_paths = n_paths;
    r.T = T;
    r.h = h;
    const double sh = std::sqrt(h);
    for (std::size_t p = 0; p < n_paths; ++p) {
        const noise_stream s(seed, stream_base + p);
        double w = 0.0, u = 1.0, ie = 0.0, ic = 0.0;
        for (std::size_t k = 0; k < steps; ++k) {
            const double dw = sh * s.normal(k);
            ie += u * dw;
            ic += u * dw + 0.5 * u * (dw * dw - h);
            w += dw;
            u = std::exp(w - 0.5 * double(k + 1) * h);
            r.min_integral_euler = std::min(r.min_integral_euler, ie);
            r.min_integral_corrected = std::min(r.min_integral_corrected, ic);
            r.min_u = std::min(r.min_u, u);
        }
        r.max_residual_euler = std::max(r.max_residual_euler, std::fabs(ie - (u - 1.0)));
        r.max_residual_corrected =
            std::max(r.max_residual_corrected, std::fabs(ic - (u - 1.0)));
    }
    return r;
}

struct reflected_surrogate_report {
    double R = 0.0, h = 0.0;
    std::vector<double> probes;
    // [probe][path]: prefix min of the weighted integral, and the clock z.
    std::vector<std::vector<double>> min_stat;
    std::vector<std::vector<double>> z;
};

// One-dimensional surrogate of the regime the positivity proof rules out: a
// walk X_{k+1} = max(R, X_k + dW) held at Q-distance >= R from the origin,
// so v = 2X >= 2R and the clock obeys z_t >= (2R)^2 (1 - e^{-2t})/2 exactly.
// The weighted integral is then a Brownian motion run at clock z and its
// prefix minima keep falling as the horizon grows.
inline reflected_surrogate_report reflected_lower_bound(double R, double h,
                                                        const std::vector<double>& probes,
                                                        std::size_t n_paths,
                                                        std::uint64_t seed,
                                                        std::uint64_t stream_base = 0) {
    if (!(R > 0.0)) throw precondition_error("reflected surrogate: barrier must be positive");
    if (n_paths == 0) throw config_error("reflected surrogate: need at least one path");
    if (probes.empty()) throw config_error("reflected surrogate: need at least one probe");
    std::vector<std::size_t> idx(probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const double t = probes[i];
        const auto k = static_cast<std::size_t>(std::llround(t / h));
        if (k == 0 || std::fabs(double(k) * h - t) > 1e-9 * std::max(1.0, t))
            throw grid_error("reflected surrogate: probe is not a positive grid time");
        if (i > 0 && k <= idx[i - 1])
            throw config_error("reflected surrogate: probes must be strictly increasing");
        idx[i] = k;
    }
    reflected_surrogate_report r;
    r.R = R;
    r.h = h;
    r.probes = probes;
    r.min_stat.assign(probes.size(), std::vector<double>(n_paths));
    r.z.assign(probes.size(), std::vector<double>(n_paths));
    const double sh = std::sqrt(h);
    for (std::size_t p = 0; p < n_paths; ++p) {
        const noise_stream s(seed, stream_base + p);
        double x = R, lb = 0.0, lo = 0.0, z = 0.0;
        std::size_t next = 0;
        for (std::size_t k = 0; k < idx.back(); ++k) {
            const double t_k = double(k) * h;
            const double dW = sh * s.normal(k);
            lb += std::exp(-t_k) * 2.0 * x * dW;  // v dw with dw = sign(x) dW
            lo = std::min(lo, lb);
            z += std::exp(-2.0 * t_k) * 4.0 * x * x * h;
            x = std::max(R, x + dW);
            if (k + 1 == idx[next]) {
                r.min_stat[next][p] = lo;
                r.z[next][p] = z;
                ++next;
            }
        }
    }
    return r;
}

}  // namespace hd
