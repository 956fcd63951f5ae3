#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace snn {

/// Philox4x32-10 counter-based generator.
///
/// A generator is identified by a 64-bit key (the master seed) and a 64-bit
/// stream id; the remaining 64 bits of the counter enumerate blocks. Two
/// generators with different (seed, stream) pairs never share output blocks,
/// so per-sample substreams can be handed out to workers in any order and the
/// results do not depend on scheduling.
class Philox4x32 {
public:
    using result_type = std::uint64_t;

    Philox4x32(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (used_ == 2) {
            refill();
        }
        const std::uint64_t lo = buffer_[2 * used_];
        const std::uint64_t hi = buffer_[2 * used_ + 1];
        ++used_;
        return (hi << 32) | lo;
    }

    std::uint64_t seed() const noexcept {
        return static_cast<std::uint64_t>(key_[0]) | (static_cast<std::uint64_t>(key_[1]) << 32);
    }
    std::uint64_t stream() const noexcept { return stream_; }

    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    /// The raw bijection: ten Philox rounds applied to `ctr` under `key`.
    static Block bijection(Block ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    void refill() noexcept {
        const Block ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        buffer_ = bijection(ctr, key_);
        ++block_;
        used_ = 0;
    }

    Key key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    Block buffer_{};
    int used_ = 2;
};

/// Random variates drawn from a Philox stream. All samplers in the library
/// take an `Rng&`; nothing holds a shared generator.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream) noexcept : engine_(seed, stream) {}

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform() noexcept {
        for (;;) {
            const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
            if (u > 0.0) {
                return u;
            }
        }
    }

    /// Standard normal via the polar method (pairs are cached).
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double v1 = 0.0;
        double v2 = 0.0;
        double s = 0.0;
        do {
            v1 = 2.0 * uniform() - 1.0;
            v2 = 2.0 * uniform() - 1.0;
            s = v1 * v1 + v2 * v2;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v2 * f;
        has_spare_ = true;
        return v1 * f;
    }

    /// Unit-rate exponential.
    double exponential() noexcept { return -std::log(uniform()); }

    std::uint64_t bits() noexcept { return engine_(); }

    /// Uniform integer in [0, n). Rejection-free multiply-shift is fine here;
    /// n is at most the number of locations.
    std::uint64_t below(std::uint64_t n) noexcept {
        const unsigned __int128 product = static_cast<unsigned __int128>(engine_()) * n;
        return static_cast<std::uint64_t>(product >> 64);
    }

    std::uint64_t seed() const noexcept { return engine_.seed(); }
    std::uint64_t stream() const noexcept { return engine_.stream(); }

private:
    Philox4x32 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stream ids reserved for non-sample randomness. Sample k of an ensemble
/// uses stream k, so these live at the top of the 64-bit range.
namespace streams {
inline constexpr std::uint64_t kOrdering = 0xFFFF'FFFF'0000'0001ull;
inline constexpr std::uint64_t kSimulation = 0xFFFF'FFFF'0000'0002ull;
inline constexpr std::uint64_t kBenchmark = 0xFFFF'FFFF'0001'0000ull;
}  // namespace streams

}  // namespace snn
