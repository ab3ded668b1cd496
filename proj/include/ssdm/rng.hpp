#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace ssdm {

/// Counter-based random stream built on Philox4x32-10.
///
/// A stream is fully described by (seed, counter): every draw consumes one
/// counter value, so replaying from the same pair reproduces the same
/// sequence bit-for-bit. Independent sub-streams are obtained with derive(),
/// which hashes a purpose tag and an index into a fresh key. Work items that
/// own a derived stream give identical results regardless of how they are
/// scheduled across threads.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0) noexcept
        : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    /// 128 random bits for the current counter; advances the counter.
    std::array<std::uint64_t, 2> next_block() noexcept {
        const auto out = philox(seed_, counter_);
        ++counter_;
        return out;
    }

    std::uint64_t next_u64() noexcept { return next_block()[0]; }

    /// Uniform double in the open interval (0, 1).
    double uniform() noexcept { return to_open_unit(next_u64()); }

    /// Two independent standard normals from one counter (Box-Muller).
    std::array<double, 2> normal_pair() noexcept {
        const auto block = next_block();
        const double u1 = to_open_unit(block[0]);
        const double u2 = to_open_unit(block[1]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

    double normal() noexcept { return normal_pair()[0]; }

    void fill_normal(std::span<double> out) noexcept {
        std::size_t i = 0;
        for (; i + 1 < out.size(); i += 2) {
            const auto pair = normal_pair();
            out[i] = pair[0];
            out[i + 1] = pair[1];
        }
        if (i < out.size()) out[i] = normal();
    }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept {
        // Lemire's multiply-shift; the bias is < n / 2^64 and irrelevant here.
        __extension__ using Wide = unsigned __int128;
        return static_cast<std::uint64_t>((static_cast<Wide>(next_u64()) * n) >> 64);
    }

    /// Independent stream keyed by (this seed, tag, index); counter starts at 0.
    RngStream derive(std::uint64_t tag, std::uint64_t index = 0) const noexcept {
        std::uint64_t key = mix64(seed_ ^ 0x5851f42d4c957f2dULL);
        key = mix64(key ^ mix64(tag + 0x9e3779b97f4a7c15ULL));
        key = mix64(key ^ mix64(index + 0xd1b54a32d192ed03ULL));
        return RngStream(key);
    }

private:
    static constexpr double to_open_unit(std::uint64_t bits) noexcept {
        // 53 random mantissa bits, shifted by half an ulp away from 0.
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    static constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::array<std::uint64_t, 2> philox(std::uint64_t key,
                                                std::uint64_t counter) noexcept {
        constexpr std::uint32_t kMul0 = 0xD2511F53u;
        constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
        constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
        constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

        std::uint32_t c0 = static_cast<std::uint32_t>(counter);
        std::uint32_t c1 = static_cast<std::uint32_t>(counter >> 32);
        std::uint32_t c2 = 0;
        std::uint32_t c3 = 0;
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);

        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c0;
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c2;
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            c0 = hi1 ^ c1 ^ k0;
            c1 = lo1;
            c2 = hi0 ^ c3 ^ k1;
            c3 = lo0;
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return {(static_cast<std::uint64_t>(c1) << 32) | c0,
                (static_cast<std::uint64_t>(c3) << 32) | c2};
    }

    std::uint64_t seed_;
    std::uint64_t counter_;
};

/// Fixed purpose tags for splitting a master seed into stage seeds.
namespace stream_tag {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kSample = 3;
inline constexpr std::uint64_t kEvalPermutation = 4;
}  // namespace stream_tag

}  // namespace ssdm
