// The two integrators.
//
//   integrate_bounded: Euler-Maruyama for dX = F(X) dt + dW with bounded F.
//     X_{k+1} = X_k + dW_k + h F(X_k). With F = 0 the scheme is exact.
//
//   integrate_mild: exponential Euler for dX = (AX + F(X)) dt + dW with
//     diagonal negative A. Per coordinate,
//       X^j_{k+1} = e^{-a_j h} X^j_k + C^j + ((1 - e^{-a_j h})/a_j) F_j(X_k)
//     where C^j is the exact stochastic-convolution increment, a centered
//     normal with variance q_j (1 - e^{-2 a_j h}) / (2 a_j). With F = 0 each
//     mode follows its exact Ornstein-Uhlenbeck transition.
//
// Determinism contract: every Gaussian draw is a pure function of
// (seed, stream, index) — path p reads increments from stream base+p at
// index (step*substeps + sub)*dim + coord, and its initial condition from
// stream (base+p) | 1<<63 — and observers write only to per-path slots, so
// results are bit-identical for any worker count or scheduling order.
// Reductions over paths are the caller's job and must run in path order.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <thread>
#include <utility>
#include <vector>

#include "hilbert_diffuse/drift.hpp"
#include "hilbert_diffuse/errors.hpp"
#include "hilbert_diffuse/rng.hpp"
#include "hilbert_diffuse/spectral_space.hpp"
#include "hilbert_diffuse/trajectory.hpp"

namespace hd {

struct integrate_options {
    std::vector<std::size_t> record;  // grid indices; empty -> {0, steps}
    int substeps = 1;                 // sub-draws per step (noise refinement coupling)
    std::uint64_t stream_base = 0;
    unsigned jobs = 1;
};

// Observer concept: start_path(p, x0), step(p, k, x_k, noise_k, F(x_k),
// x_{k+1}), end_path(p, x_T). Called from worker threads; implementations
// must write only to slots indexed by p.
struct no_op_observer {
    void start_path(std::size_t, const vec&) {}
    void step(std::size_t, std::size_t, const vec&, const vec&, const vec&, const vec&) {}
    void end_path(std::size_t, const vec&) {}
};

namespace detail {

inline std::size_t grid_steps(double T, double h) {
    if (!(h > 0.0)) throw config_error("integrate: step size must be positive");
    if (!(T >= h)) throw config_error("integrate: horizon must cover at least one step");
    const auto n = static_cast<std::size_t>(std::llround(T / h));
    if (n == 0 || std::fabs(double(n) * h - T) > 1e-9 * std::max(1.0, T))
        throw config_error("integrate: horizon is not a multiple of the step size");
    return n;
}

inline std::vector<std::size_t> normalize_record(std::vector<std::size_t> r, std::size_t steps) {
    if (r.empty()) r = {0, steps};
    r.push_back(0);
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    if (r.back() > steps) throw grid_error("record index beyond the last grid step");
    return r;
}

// Chunked parallel map over paths with deterministic chunk boundaries.
// Exceptions from workers are rethrown on the calling thread.
template <class Fn>
void for_each_chunk(std::size_t n, unsigned jobs, Fn&& fn) {
    if (jobs <= 1 || n < 2) {
        fn(std::size_t{0}, n);
        return;
    }
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t b = std::min(n, std::size_t(w) * chunk);
        const std::size_t e = std::min(n, b + chunk);
        pool.emplace_back([&, w, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

inline void check_finite(const vec& x, const char* module) {
    for (double v : x)
        if (!std::isfinite(v)) throw numerical_abort(module, "non-finite state encountered");
}

// Shared stepping loop. The drift is evaluated once per step at the left
// point; `advance(x, dw, fx)` applies one scheme step in place; `scale` is
// the per-sub-draw coordinate std.
template <class Obs, class Advance>
trajectory_batch run_scheme(const initial_law& law, const drift_model& F,
                            const covariance_spectrum& Q, double T, double h, std::size_t N,
                            std::uint64_t seed, const integrate_options& opt, std::string scheme,
                            const vec& scale, Obs&& obs, Advance&& advance) {
    if (law.dim != Q.dim || F.dim != Q.dim)
        throw config_error("integrate: law/drift/spectrum dimensions disagree");
    if (N == 0) throw config_error("integrate: need at least one path");
    if (opt.substeps < 1) throw config_error("integrate: substeps must be >= 1");

    trajectory_batch batch;
    batch.h = h;
    batch.steps = grid_steps(T, h);
    batch.n_paths = N;
    batch.dim = Q.dim;
    batch.record_indices = normalize_record(opt.record, batch.steps);
    batch.seed = seed;
    batch.stream_base = opt.stream_base;
    batch.substeps = opt.substeps;
    batch.noise_scale = scale;
    batch.scheme = std::move(scheme);
    batch.model_tag = Q.name + "/" + F.name;
    batch.states.assign(batch.record_indices.size(),
                        std::vector<double>(N * batch.dim, 0.0));

    const std::size_t d = batch.dim;
    const auto substeps = static_cast<std::uint64_t>(opt.substeps);

    for_each_chunk(N, opt.jobs, [&](std::size_t begin, std::size_t end) {
        // Per-worker copies: drift eval and law sampler may carry scratch.
        drift_model Fw = F;
        initial_law lw = law;
        vec x(d), dw(d), fx(d);
        for (std::size_t p = begin; p < end; ++p) {
            const noise_stream init_s(seed, initial_stream(opt.stream_base, p));
            const noise_stream inc_s(seed, increment_stream(opt.stream_base, p));
            std::uint64_t init_cursor = 0;
            x = lw.sample(init_s, init_cursor);
            if (x.size() != d) throw config_error("integrate: law sample has wrong dimension");
            obs.start_path(p, x);

            std::size_t next_slot = 0;
            auto record_if_due = [&](std::size_t k) {
                if (next_slot < batch.record_indices.size() &&
                    batch.record_indices[next_slot] == k) {
                    std::copy(x.begin(), x.end(),
                              batch.states[next_slot].begin() + p * d);
                    ++next_slot;
                }
            };
            record_if_due(0);

            vec x_prev(d);
            for (std::size_t k = 0; k < batch.steps; ++k) {
                for (std::size_t j = 0; j < d; ++j) dw[j] = 0.0;
                for (std::uint64_t sub = 0; sub < substeps; ++sub) {
                    const std::uint64_t base = (std::uint64_t(k) * substeps + sub) * d;
                    for (std::size_t j = 0; j < d; ++j)
                        dw[j] += scale[j] * inc_s.normal(base + j);
                }
                x_prev = x;
                Fw.eval(x, fx);
                advance(x, dw, fx);
                check_finite(x, "sde_engine");
                obs.step(p, k, x_prev, dw, fx, x);
                record_if_due(k + 1);
            }
            obs.end_path(p, x);
        }
    });
    return batch;
}

}  // namespace detail

// Per-coordinate std of the exact stochastic-convolution increment over a
// step of length h: sqrt(q_j (1 - e^{-2 a_j h}) / (2 a_j)).
inline vec convolution_std(const linear_operator& A, const covariance_spectrum& Q, double h) {
    if (A.a.size() != Q.dim) throw config_error("convolution: operator/spectrum mismatch");
    if (!(h >= 0.0)) throw precondition_error("convolution: step must be nonnegative");
    vec s(Q.dim);
    for (std::size_t j = 0; j < Q.dim; ++j)
        s[j] = std::sqrt(Q.q[j] * (-std::expm1(-2.0 * A.a[j] * h)) / (2.0 * A.a[j]));
    return s;
}

// One exact stochastic-convolution increment; h = 0 gives the zero vector.
inline vec stochastic_convolution_increment(const linear_operator& A,
                                            const covariance_spectrum& Q, double h,
                                            const noise_stream& s, std::uint64_t& cursor) {
    if (h == 0.0) return vec(Q.dim, 0.0);
    const vec sd = convolution_std(A, Q, h);
    vec c(Q.dim);
    for (std::size_t j = 0; j < Q.dim; ++j) c[j] = sd[j] * s.normal(cursor++);
    return c;
}

// Euler-Maruyama for the bounded-drift equation.
template <class Obs = no_op_observer>
trajectory_batch integrate_bounded(const initial_law& law, const drift_model& F,
                                   const covariance_spectrum& Q, double T, double h,
                                   std::size_t N, std::uint64_t seed,
                                   integrate_options opt = {}, Obs&& obs = Obs{}) {
    const double h_sub = h / double(opt.substeps < 1 ? 1 : opt.substeps);
    vec scale(Q.dim);
    for (std::size_t j = 0; j < Q.dim; ++j) scale[j] = std::sqrt(Q.q[j] * h_sub);
    return detail::run_scheme(
        law, F, Q, T, h, N, seed, opt, "euler_maruyama", scale, std::forward<Obs>(obs),
        [h](vec& x, const vec& dw, const vec& fx) {
            for (std::size_t j = 0; j < x.size(); ++j) x[j] += dw[j] + h * fx[j];
        });
}

// Exponential (mild) integrator for the linear-plus-bounded equation.
template <class Obs = no_op_observer>
trajectory_batch integrate_mild(const initial_law& law, const linear_operator& A,
                                const drift_model& F, const covariance_spectrum& Q, double T,
                                double h, std::size_t N, std::uint64_t seed,
                                integrate_options opt = {}, Obs&& obs = Obs{}) {
    if (A.a.size() != Q.dim) throw config_error("integrate: operator/spectrum mismatch");
    if (opt.substeps != 1)
        throw config_error("integrate: the mild scheme does not support substeps");
    const std::size_t d = Q.dim;
    vec decay(d), phi1(d);
    for (std::size_t j = 0; j < d; ++j) {
        decay[j] = std::exp(-A.a[j] * h);
        phi1[j] = -std::expm1(-A.a[j] * h) / A.a[j];
    }
    trajectory_batch batch = detail::run_scheme(
        law, F, Q, T, h, N, seed, opt, "exponential_mild", convolution_std(A, Q, h),
        std::forward<Obs>(obs),
        [&decay, &phi1](vec& x, const vec& dw, const vec& fx) {
            for (std::size_t j = 0; j < x.size(); ++j)
                x[j] = decay[j] * x[j] + dw[j] + phi1[j] * fx[j];
        });
    batch.model_tag += "/" + A.name;
    return batch;
}

// Empirical law of the recorded states at grid time t0, for chained runs.
// Fresh runs from it must use a disjoint stream base.
inline initial_law restart_from(const trajectory_batch& batch, double t0) {
    const std::size_t slot = batch.slot_of_time(t0);
    std::vector<vec> samples(batch.n_paths);
    for (std::size_t p = 0; p < batch.n_paths; ++p) samples[p] = batch.state_vec(slot, p);
    return initial_law::empirical(std::move(samples));
}

}  // namespace hd
