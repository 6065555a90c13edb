// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).
//
// A block cipher on a 128-bit counter under a 64-bit key. Random access:
// block(ctr, key) is a pure function, so any (seed, stream, index) draw can
// be regenerated without replaying a sequential state. That property is what
// makes trajectory noise reproducible across parallel schedules.
#pragma once

#include <array>
#include <cstdint>

namespace hd {

struct philox4x32 {
    using counter_type = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t M0 = 0xD2511F53u;
    static constexpr std::uint32_t M1 = 0xCD9E8D57u;
    static constexpr std::uint32_t W0 = 0x9E3779B9u;
    static constexpr std::uint32_t W1 = 0xBB67AE85u;

    static counter_type block(counter_type x, key_type k) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t(M0) * x[0];
            const std::uint64_t p1 = std::uint64_t(M1) * x[2];
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
            k[0] += W0;
            k[1] += W1;
        }
        return x;
    }
};

}  // namespace hd
