// Small statistics toolbox: running moments, Wilson proportion intervals,
// and a two-sample Kolmogorov-Smirnov test. Everything here is used either
// to turn Monte Carlo counts into calibrated verdicts or to compare two
// empirical samples, so the formulas are kept explicit and sourced.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "hilbert_diffuse/errors.hpp"

namespace hd {

// z-quantile for two-sided 95% coverage; Phi(z) = 0.975.
inline constexpr double z_95 = 1.959963984540054;

// Welford running mean/variance. Single pass, numerically stable.
class running_moments {
   public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    // Unbiased sample variance (n-1 denominator).
    double variance() const {
        if (n_ < 2) return 0.0;
        return m2_ / static_cast<double>(n_ - 1);
    }
    double stddev() const { return std::sqrt(variance()); }
    // Standard error of the mean.
    double stderr_mean() const {
        if (n_ < 2) return std::numeric_limits<double>::infinity();
        return stddev() / std::sqrt(static_cast<double>(n_));
    }

   private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const { return lo <= x && x <= hi; }
};

// Wilson score interval for a binomial proportion at confidence level
// Phi(z) - Phi(-z). Behaves sensibly at k = 0 and k = n, unlike the
// normal-approximation interval.
inline interval wilson_interval(std::size_t successes, std::size_t trials, double z = z_95) {
    if (trials == 0) throw precondition_error("wilson_interval: zero trials");
    if (successes > trials) throw precondition_error("wilson_interval: successes > trials");
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half =
        z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    // At k = 0 the lower endpoint is exactly 0 and at k = n the upper is
    // exactly 1; snap them so rounding residue does not leak into verdicts.
    const double lo = (successes == 0) ? 0.0 : std::max(0.0, center - half);
    const double hi = (successes == trials) ? 1.0 : std::min(1.0, center + half);
    return {lo, hi};
}

// Asymptotic Kolmogorov distribution tail Q(x) = 2 sum_{j>=1} (-1)^{j-1} e^{-2 j^2 x^2}.
// That series needs O(1/x^2) terms for small x, so below the usual crossover
// we evaluate the Jacobi-theta transform of the CDF instead:
//   P(D <= x) = sqrt(2 pi)/x sum_{j>=1} exp(-(2j-1)^2 pi^2 / (8 x^2)).
inline double kolmogorov_tail(double x) {
    if (x <= 0.0) return 1.0;
    if (x < 1.18) {
        const double t = std::numbers::pi * std::numbers::pi / (8.0 * x * x);
        double cdf = 0.0;
        for (int j = 1; j <= 20; ++j) {
            const double term = std::exp(-double(2 * j - 1) * double(2 * j - 1) * t);
            cdf += term;
            if (term < 1e-18 * cdf) break;
        }
        cdf *= std::sqrt(2.0 * std::numbers::pi) / x;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * double(j) * double(j) * x * x);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct ks_result {
    double statistic = 0.0;  // sup |F1 - F2|
    double p_value = 1.0;    // asymptotic
};

// Two-sample Kolmogorov-Smirnov test. Inputs are copied and sorted.
inline ks_result ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw precondition_error("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t ia = 0, ib = 0;
    double d = 0.0;
    while (ia < a.size() && ib < b.size()) {
        const double xa = a[ia], xb = b[ib];
        const double x = std::min(xa, xb);
        while (ia < a.size() && a[ia] <= x) ++ia;
        while (ib < b.size() && b[ib] <= x) ++ib;
        d = std::max(d, std::fabs(double(ia) / na - double(ib) / nb));
    }
    const double ne = na * nb / (na + nb);
    const double arg = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    return {d, kolmogorov_tail(arg)};
}

// One-sample KS against a continuous CDF.
template <class Cdf>
inline ks_result ks_one_sample(std::vector<double> a, Cdf cdf) {
    if (a.empty()) throw precondition_error("ks_one_sample: empty sample");
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double f = cdf(a[i]);
        d = std::max(d, std::fabs(f - double(i) / n));
        d = std::max(d, std::fabs(double(i + 1) / n - f));
    }
    const double arg = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    return {d, kolmogorov_tail(arg)};
}

}  // namespace hd
