// Deterministic noise streams on top of Philox4x32-10.
//
// Addressing scheme (fixed; changing it changes every simulated path):
//   key      = 64-bit seed, split (low32, high32).
//   counter  = (block low32, block high32, stream low32, stream high32),
//              where block = index >> 1.
//   One block yields two 64-bit words; draw `index` takes word `index & 1`.
//   The map (seed, stream, index) -> value stays a pure function.
//
// Stream/index conventions used across the engine:
//   - Path p of a run with stream base B draws increments from stream B + p.
//   - Initial-condition sampling for path p uses stream (B + p) | (1 << 63),
//     keeping start-value draws disjoint from increment draws.
//   - Increment draw index = step * dim + coordinate.
//
// Uniforms land in the open interval (0,1): ((x >> 11) + 0.5) * 2^-53.
// Normals via the Wichura AS 241 PPND16 rational approximation of the
// inverse normal CDF (|error| < 1e-15 over (0,1)), so a normal draw costs
// exactly one uniform and the stream layout stays one-draw-one-index.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "hilbert_diffuse/errors.hpp"
#include "hilbert_diffuse/philox.hpp"

namespace hd {

// Inverse of the standard normal CDF, Wichura's algorithm AS 241 (PPND16).
inline double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw precondition_error("inverse_normal_cdf: p must lie in (0,1)");
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) *
                        r +
                    4.5921953931549871457e+4) *
                       r +
                   1.3731693765509461125e+4) *
                      r +
                  1.9715909503065514427e+3) *
                     r +
                 1.3314166789178437745e+2) *
                    r +
                3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) *
                        r +
                    2.1213794301586595867e+4) *
                       r +
                   5.3941960214247511077e+3) *
                      r +
                  6.8718700749205790830e+2) *
                     r +
                 4.2313330701600911252e+1) *
                    r +
                1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double v;
    if (r <= 5.0) {
        r -= 1.6;
        v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) *
                     r +
                 1.27045825245236838258e+0) *
                    r +
                3.64784832476320460504e+0) *
                   r +
               5.76949722146069140550e+0) *
                  r +
              4.63033784615654529590e+0) *
                 r +
             1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) *
                     r +
                 1.48103976427480074590e-1) *
                    r +
                6.89767334985100004550e-1) *
                   r +
               1.67638483018380384940e+0) *
                  r +
              2.05319162663775882187e+0) *
                 r +
             1.0);
    } else {
        r -= 5.0;
        v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) *
                     r +
                 2.65321895265761230930e-2) *
                    r +
                2.96560571828504891230e-1) *
                   r +
               1.78482653991729133580e+0) *
                  r +
              5.46378491116411436990e+0) *
                 r +
             6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) *
                     r +
                 7.86869131145613259100e-4) *
                    r +
                1.48753612908506148525e-2) *
                   r +
               1.36929880922735805310e-1) *
                  r +
              5.99832206555887937690e-1) *
                 r +
             1.0);
    }
    return (q < 0.0) ? -v : v;
}

// Standard normal CDF (for oracles and KS statistics).
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Stateless draw addressed by (seed, stream, index).
class noise_stream {
   public:
    noise_stream(std::uint64_t seed, std::uint64_t stream) : stream_(stream) {
        key_ = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    }

    // Raw 64-bit word for draw `index`.
    std::uint64_t bits(std::uint64_t index) const {
        const std::uint64_t blk = index >> 1;
        const philox4x32::counter_type ctr = {
            static_cast<std::uint32_t>(blk), static_cast<std::uint32_t>(blk >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        const auto out = philox4x32::block(ctr, key_);
        return (index & 1) ? ((std::uint64_t(out[3]) << 32) | out[2])
                           : ((std::uint64_t(out[1]) << 32) | out[0]);
    }

    // Uniform draw in the open interval (0,1).
    double uniform(std::uint64_t index) const {
        return (static_cast<double>(bits(index) >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal draw.
    double normal(std::uint64_t index) const { return inverse_normal_cdf(uniform(index)); }

    std::uint64_t stream_id() const { return stream_; }

   private:
    philox4x32::key_type key_;
    std::uint64_t stream_;
};

// Stream used for sampling the initial condition of path `p` under base `b`.
inline std::uint64_t initial_stream(std::uint64_t base, std::uint64_t p) {
    return (base + p) | (std::uint64_t(1) << 63);
}

// Stream used for the driving increments of path `p` under base `b`.
inline std::uint64_t increment_stream(std::uint64_t base, std::uint64_t p) { return base + p; }

}  // namespace hd
