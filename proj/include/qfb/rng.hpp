#pragma once

// Counter-based random numbers.  Every variate is a pure function of
// (seed, stream, index), so trajectories can be scheduled on any number of
// threads without changing a single bit of output.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace qfb {

/// Philox4x32-10 block cipher (Salmon et al., SC'11).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter apply(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
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
};

namespace detail {
/// Uniform in the open interval (0, 1) from the top 52 bits; the half-ulp
/// offset keeps both endpoints out exactly.
inline double open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (std::uint64_t{hi} << 32 | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}
} // namespace detail

/// Pair of independent standard normals for (seed, stream, block).
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t stream,
                                         std::uint64_t block) {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block),
                                  static_cast<std::uint32_t>(block >> 32),
                                  static_cast<std::uint32_t>(stream),
                                  static_cast<std::uint32_t>(stream >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed),
                              static_cast<std::uint32_t>(seed >> 32)};
    const auto out = Philox4x32::apply(ctr, key);
    const double u1 = detail::open_unit(out[0], out[1]);
    const double u2 = detail::open_unit(out[2], out[3]);
    // Box-Muller
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
}

/// The index-th standard normal of a stream.
inline double normal_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return normal_pair(seed, stream, index / 2)[index % 2];
}

/// Sequential view of one stream; yields exactly normal_at(seed, stream, 0), (.., 1), ...
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    double operator()() {
        if (index_ % 2 == 0)
            cache_ = normal_pair(seed_, stream_, index_ / 2);
        return cache_[index_++ % 2];
    }

    std::uint64_t position() const { return index_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t index_ = 0;
    std::array<double, 2> cache_{};
};

} // namespace qfb
