// Monte Carlo verification that the time-t law charges every Q-norm
// ellipsoid: hit-probability estimation with Wilson intervals, the short-time
// staying bound
//
//   tau(R) = R / (6 (1 + sup ||F||)),   sup ||F|| h- or Q-norm variant,
//
// under which the accumulated drift integral stays Q-short of R/6 pathwise
// and mass cannot all leave K_R(a), the Markov chaining of positivity over a
// partition s_j = j tau(R), and the exact shift equivariance of the
// bounded-drift model under additive noise.
//
// Positivity is one-sided: a zero-hit probe is reported inconclusive, never
// as a refutation, because a Monte Carlo run can only certify mass that its
// resolution reaches.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hilbert_diffuse/drift.hpp"
#include "hilbert_diffuse/errors.hpp"
#include "hilbert_diffuse/sde_engine.hpp"
#include "hilbert_diffuse/spectral_space.hpp"
#include "hilbert_diffuse/stats.hpp"
#include "hilbert_diffuse/trajectory.hpp"

namespace hd {

enum class tau_variant { q_norm, h_norm };

// Staying horizon tau(R) = R / (6 (1 + sup)). The h-norm variant uses the
// plain-norm drift sup and is the smaller (conservative) default since
// sup_q <= sup_h.
inline double tau_of_r(double R, const drift_model& F, tau_variant v) {
    if (!(R > 0.0)) throw precondition_error("tau_of_r: radius must be positive");
    const double sup = (v == tau_variant::q_norm) ? F.sup_q : F.sup_h;
    return R / (6.0 * (1.0 + sup));
}

// One experiment: a model (bounded if op is absent, linear otherwise), an
// initial law, a target ellipsoid, and a probe grid in (0, T].
struct scenario {
    covariance_spectrum spectrum;
    std::optional<linear_operator> op;
    drift_model drift;
    initial_law initial;
    ellipsoid target;
    double T = 1.0;
    double h = 1e-2;
    std::vector<double> probes;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 0;
    unsigned jobs = 1;

    void validate() const {
        if (spectrum.dim != drift.dim || spectrum.dim != initial.dim ||
            spectrum.dim != target.center.size())
            throw config_error("scenario: dimensions disagree");
        if (op && op->a.size() != spectrum.dim)
            throw config_error("scenario: operator dimension disagrees");
        if (n_paths == 0) throw config_error("scenario: need at least one path");
        if (probes.empty()) throw config_error("scenario: need at least one probe time");
        for (double t : probes)
            if (!(t > 0.0) || t > T + 1e-9 * std::max(1.0, T))
                throw config_error("scenario: probe times must lie in (0, T]");
        detail::grid_steps(T, h);  // throws config_error unless T is gridable
    }
};

struct probe_result {
    double requested = 0.0;  // probe time as asked
    double effective = 0.0;  // nearest positive grid time actually used
    std::size_t grid_index = 0;
    std::size_t hits = 0;
    std::size_t samples = 0;
    double estimate = 0.0;
    interval ci;          // Wilson 95%
    bool positive = false;  // Wilson lower bound > 0
};

struct positivity_report {
    double tau_q = 0.0, tau_h = 0.0;  // staying horizons for the target radius
    std::string model_tag;
    std::vector<probe_result> probes;
    bool any_inconclusive = false;  // some probe saw zero hits
    bool all_positive = false;
};

namespace detail {

// Probe times snapped to the nearest positive grid index (ties by llround);
// the effective time is echoed in the report.
inline std::vector<std::size_t> probe_indices(const std::vector<double>& probes, double h,
                                              std::size_t steps) {
    std::vector<std::size_t> idx(probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) {
        auto k = static_cast<std::size_t>(std::max<long long>(1, std::llround(probes[i] / h)));
        idx[i] = std::min(k, steps);
    }
    return idx;
}

inline trajectory_batch run_scenario(const scenario& sc, const std::vector<std::size_t>& record,
                                     std::uint64_t stream_base = 0) {
    integrate_options opt;
    opt.record = record;
    opt.jobs = sc.jobs;
    opt.stream_base = stream_base;
    if (sc.op)
        return integrate_mild(sc.initial, *sc.op, sc.drift, sc.spectrum, sc.T, sc.h, sc.n_paths,
                              sc.seed, opt);
    return integrate_bounded(sc.initial, sc.drift, sc.spectrum, sc.T, sc.h, sc.n_paths, sc.seed,
                             opt);
}

inline probe_result count_hits(const trajectory_batch& b, const ellipsoid& K, double requested,
                               std::size_t k) {
    probe_result r;
    r.requested = requested;
    r.effective = b.time_of(k);
    r.grid_index = k;
    r.samples = b.n_paths;
    const std::size_t slot = b.slot_of_index(k);
    for (std::size_t p = 0; p < b.n_paths; ++p)
        if (K.contains(b.state_vec(slot, p))) ++r.hits;
    r.estimate = double(r.hits) / double(r.samples);
    r.ci = wilson_interval(r.hits, r.samples);
    r.positive = r.ci.lo > 0.0;
    return r;
}

}  // namespace detail

// Fraction of paths inside the target ellipsoid at each probe time.
inline positivity_report hit_probability(const scenario& sc) {
    sc.validate();
    const std::size_t steps = detail::grid_steps(sc.T, sc.h);
    const auto idx = detail::probe_indices(sc.probes, sc.h, steps);
    auto record = idx;
    std::sort(record.begin(), record.end());
    record.erase(std::unique(record.begin(), record.end()), record.end());
    const auto batch = detail::run_scenario(sc, record);

    positivity_report rep;
    rep.tau_q = tau_of_r(sc.target.radius, sc.drift, tau_variant::q_norm);
    rep.tau_h = tau_of_r(sc.target.radius, sc.drift, tau_variant::h_norm);
    rep.model_tag = batch.model_tag;
    rep.all_positive = true;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto r = detail::count_hits(batch, sc.target, sc.probes[i], idx[i]);
        rep.any_inconclusive |= (r.hits == 0);
        rep.all_positive &= r.positive;
        rep.probes.push_back(std::move(r));
    }
    return rep;
}

struct lemma_stay_report {
    double tau_q = 0.0, tau_h = 0.0;
    double drift_bound = 0.0;          // R/6
    double max_drift_integral = 0.0;   // max over paths and steps of ||sum h F||_Q
    std::vector<probe_result> displaced;  // P(||X_t - X_0||_Q > R/2) per probe
    std::vector<probe_result> hits;       // target hit estimates per probe
    bool drift_ok = false;         // max_drift_integral <= R/6 + 10h
    bool displacement_ok = false;  // every Wilson upper bound < 1
    bool hits_ok = false;          // every Wilson lower bound > 0
};

namespace detail {

// Accumulates the drift integral sum_i h F(X_i) per path and the running
// max of its Q-norm. For the mild scheme the actual per-step drift factor is
// (1 - e^{-a h})/a <= h coordinate-wise, so this accumulation bounds it.
class stay_observer {
public:
    stay_observer(const covariance_spectrum& Q, double h, std::size_t n_paths)
        : q_(Q.q), h_(h), acc_(n_paths, vec(Q.dim, 0.0)), max_q_(n_paths, 0.0) {}

    void start_path(std::size_t p, const vec&) {
        std::fill(acc_[p].begin(), acc_[p].end(), 0.0);
        max_q_[p] = 0.0;
    }
    void step(std::size_t p, std::size_t, const vec&, const vec&, const vec& fx, const vec&) {
        auto& a = acc_[p];
        double s = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            a[j] += h_ * fx[j];
            s += q_[j] * a[j] * a[j];
        }
        max_q_[p] = std::max(max_q_[p], std::sqrt(s));
    }
    void end_path(std::size_t, const vec&) {}

    double max_over_paths() const {
        double m = 0.0;
        for (double v : max_q_) m = std::max(m, v);
        return m;
    }

private:
    vec q_;
    double h_;
    std::vector<vec> acc_;
    std::vector<double> max_q_;
};

}  // namespace detail

// The staying lemma, verified on a run whose probes all lie in (0, tau(R)]:
// (a) the accumulated drift integral stays Q-short of R/6 pathwise,
// (b) not every path is displaced by more than R/2 from its start,
// (c) hence the target keeps strictly positive hit mass at every probe.
// The initial law must be supported in the concentric half ellipsoid,
// verified by sampling.
inline lemma_stay_report lemma_stay_check(const scenario& sc, std::size_t support_samples = 1000) {
    sc.validate();
    const double R = sc.target.radius;
    const double tau_h = tau_of_r(R, sc.drift, tau_variant::h_norm);
    for (double t : sc.probes)
        if (t > tau_h + 1e-12)
            throw config_error("lemma stay: probes must lie in (0, tau(R)]");

    const ellipsoid half{sc.target.center, R / 2.0, sc.spectrum};
    const noise_stream probe_stream(sc.seed, initial_stream(0, sc.n_paths));
    std::uint64_t cursor = 0;
    for (std::size_t i = 0; i < support_samples; ++i)
        if (!half.contains(sc.initial.sample(probe_stream, cursor)))
            throw precondition_error(
                "lemma stay: initial law is not supported in the half ellipsoid");

    const std::size_t steps = detail::grid_steps(sc.T, sc.h);
    auto idx = detail::probe_indices(sc.probes, sc.h, steps);
    auto record = idx;
    record.push_back(0);  // displacement needs the start
    std::sort(record.begin(), record.end());
    record.erase(std::unique(record.begin(), record.end()), record.end());

    detail::stay_observer stay(sc.spectrum, sc.h, sc.n_paths);
    integrate_options opt;
    opt.record = record;
    opt.jobs = sc.jobs;
    trajectory_batch batch =
        sc.op ? integrate_mild(sc.initial, *sc.op, sc.drift, sc.spectrum, sc.T, sc.h,
                               sc.n_paths, sc.seed, opt, stay)
              : integrate_bounded(sc.initial, sc.drift, sc.spectrum, sc.T, sc.h, sc.n_paths,
                                  sc.seed, opt, stay);

    lemma_stay_report rep;
    rep.tau_q = tau_of_r(R, sc.drift, tau_variant::q_norm);
    rep.tau_h = tau_h;
    rep.drift_bound = R / 6.0;
    rep.max_drift_integral = stay.max_over_paths();
    rep.drift_ok = rep.max_drift_integral <= R / 6.0 + 10.0 * sc.h;
    rep.displacement_ok = true;
    rep.hits_ok = true;
    const std::size_t slot0 = batch.slot_of_index(0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        rep.hits.push_back(detail::count_hits(batch, sc.target, sc.probes[i], idx[i]));
        rep.hits_ok &= rep.hits.back().positive;

        probe_result d;
        d.requested = sc.probes[i];
        d.effective = batch.time_of(idx[i]);
        d.grid_index = idx[i];
        d.samples = sc.n_paths;
        const std::size_t slot = batch.slot_of_index(idx[i]);
        for (std::size_t p = 0; p < sc.n_paths; ++p) {
            const double* x0 = batch.state(slot0, p);
            const double* xt = batch.state(slot, p);
            double s = 0.0;
            for (std::size_t j = 0; j < batch.dim; ++j) {
                const double dj = xt[j] - x0[j];
                s += sc.spectrum.q[j] * dj * dj;
            }
            if (std::sqrt(s) > R / 2.0) ++d.hits;
        }
        d.estimate = double(d.hits) / double(d.samples);
        d.ci = wilson_interval(d.hits, d.samples);
        d.positive = d.ci.lo > 0.0;
        rep.displacement_ok &= d.ci.hi < 1.0;
        rep.displaced.push_back(std::move(d));
    }
    return rep;
}

struct chain_report {
    double tau = 0.0;         // h-norm staying horizon of the target radius
    double M = 0.0;           // requested chained horizon
    double M_effective = 0.0; // horizon snapped to the step grid
    std::size_t legs = 0;     // floor(M_effective / tau)
    positivity_report direct;
    ks_result restart_vs_direct;  // two-sample KS on ||X_M||_Q
    bool markov_ok = false;       // fails to reject at 1%
};

// One long run probed on a grid refining the partition s_j = j tau(R) (the
// partition points and their midpoints), plus the restart variant: simulate
// to s_1 on fresh streams, restart from the empirical time-s_1 law, continue
// to M, and compare the chained law of ||X_M||_Q with the direct one.
inline chain_report chain_experiment(const scenario& sc, double M) {
    sc.validate();
    chain_report rep;
    rep.tau = tau_of_r(sc.target.radius, sc.drift, tau_variant::h_norm);
    rep.M = M;
    if (!(M > rep.tau)) throw config_error("chain: horizon must exceed tau(R)");
    const auto steps =
        static_cast<std::size_t>(std::max<long long>(1, std::llround(M / sc.h)));
    rep.M_effective = double(steps) * sc.h;
    rep.legs = static_cast<std::size_t>(rep.M_effective / rep.tau);

    scenario direct = sc;
    direct.T = rep.M_effective;
    direct.probes.clear();
    for (std::size_t j = 1; j <= 2 * rep.legs; ++j) {
        const double t = double(j) * rep.tau / 2.0;
        if (t < rep.M_effective) direct.probes.push_back(t);
    }
    direct.probes.push_back(rep.M_effective);

    auto idx = detail::probe_indices(direct.probes, sc.h, steps);
    auto record = idx;
    std::sort(record.begin(), record.end());
    record.erase(std::unique(record.begin(), record.end()), record.end());
    const auto direct_batch = detail::run_scenario(direct, record);

    rep.direct.tau_q = tau_of_r(sc.target.radius, sc.drift, tau_variant::q_norm);
    rep.direct.tau_h = rep.tau;
    rep.direct.model_tag = direct_batch.model_tag;
    rep.direct.all_positive = true;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto r = detail::count_hits(direct_batch, sc.target, direct.probes[i], idx[i]);
        rep.direct.any_inconclusive |= (r.hits == 0);
        rep.direct.all_positive &= r.positive;
        rep.direct.probes.push_back(std::move(r));
    }

    // Restart leg on stream bases disjoint from the direct run, so the two
    // samples entering the KS comparison are independent.
    const auto k1 = detail::probe_indices({rep.tau}, sc.h, steps)[0];
    scenario leg1 = sc;
    leg1.T = double(k1) * sc.h;
    const auto b1 = detail::run_scenario(leg1, {k1}, /*stream_base=*/2 * sc.n_paths);
    scenario leg2 = sc;
    leg2.initial = restart_from(b1, leg1.T);
    leg2.T = double(steps - k1) * sc.h;
    const auto b2 = detail::run_scenario(leg2, {steps - k1}, /*stream_base=*/sc.n_paths);

    std::vector<double> chained(sc.n_paths), straight(sc.n_paths);
    const std::size_t s2 = b2.slot_of_index(steps - k1);
    const std::size_t sd = direct_batch.slot_of_index(steps);
    for (std::size_t p = 0; p < sc.n_paths; ++p) {
        chained[p] = q_norm(b2.state_vec(s2, p), sc.spectrum);
        straight[p] = q_norm(direct_batch.state_vec(sd, p), sc.spectrum);
    }
    rep.restart_vs_direct = ks_two_sample(std::move(chained), std::move(straight));
    rep.markov_ok = rep.restart_vs_direct.p_value > 0.01;
    return rep;
}

struct shift_report {
    double max_deviation = 0.0;  // sup over recorded slots of |shifted - (a + original)|
    // per probe: hits of K_R(b) in the original vs K_R(a+b) in the shifted run
    std::vector<std::pair<std::size_t, std::size_t>> hit_counts;
    bool transfer_ok = false;
};

// Exact equivariance of the bounded model under the shift x -> x + a on
// shared noise: the drift x -> F(x - a) with initial law eta + a reproduces
// a + X pathwise, so ellipsoid hit counts transfer between centers.
inline shift_report shift_experiment(const scenario& sc, const vec& a) {
    sc.validate();
    if (sc.op) throw config_error("shift: only the bounded model is shift equivariant");
    require_dim(a, sc.spectrum.dim, "shift");

    const std::size_t steps = detail::grid_steps(sc.T, sc.h);
    auto record = detail::probe_indices(sc.probes, sc.h, steps);
    std::sort(record.begin(), record.end());
    record.erase(std::unique(record.begin(), record.end()), record.end());

    const auto base = detail::run_scenario(sc, record);
    scenario shifted = sc;
    shifted.drift = sc.drift.shifted_by(a);
    shifted.initial = sc.initial.shifted_by(a);
    const auto moved = detail::run_scenario(shifted, record);

    shift_report rep;
    for (std::size_t s = 0; s < record.size(); ++s)
        for (std::size_t p = 0; p < sc.n_paths; ++p) {
            const double* x = base.state(s, p);
            const double* y = moved.state(s, p);
            for (std::size_t j = 0; j < sc.spectrum.dim; ++j)
                rep.max_deviation =
                    std::max(rep.max_deviation, std::fabs(y[j] - (x[j] + a[j])));
        }

    vec center_shifted(sc.spectrum.dim);
    for (std::size_t j = 0; j < center_shifted.size(); ++j)
        center_shifted[j] = sc.target.center[j] + a[j];
    const ellipsoid moved_target{center_shifted, sc.target.radius, sc.spectrum};
    rep.transfer_ok = true;
    for (std::size_t i = 0; i < record.size(); ++i) {
        const auto orig = detail::count_hits(base, sc.target, base.time_of(record[i]), record[i]);
        const auto shif =
            detail::count_hits(moved, moved_target, moved.time_of(record[i]), record[i]);
        rep.hit_counts.emplace_back(orig.hits, shif.hits);
        rep.transfer_ok &= orig.hits == shif.hits;
    }
    return rep;
}

}  // namespace hd
