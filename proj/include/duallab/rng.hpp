#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace duallab {

// Philox-4x32-10 counter-based generator. A draw is a pure function of
// (seed, path, step, lane), so simulations are reproducible for any work
// partitioning across threads.
namespace philox {

constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;

inline void round_once(std::array<std::uint32_t, 4>& ctr, const std::array<std::uint32_t, 2>& key) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline std::array<std::uint32_t, 4> block(std::uint64_t seed, std::array<std::uint32_t, 4> ctr) {
    std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                        static_cast<std::uint32_t>(seed >> 32)};
    for (int r = 0; r < 10; ++r) {
        round_once(ctr, key);
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

} // namespace philox

// Four standard normal lanes per (path, step) key: lanes 0..2 drive the
// three Brownian coordinates of the radial simulation, lane 3 the orthogonal
// noise. Box-Muller keeps the draw count fixed (no rejection), which the
// counter scheme requires.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    double uniform(std::uint64_t path, std::uint32_t step, std::uint32_t lane) const {
        return to_unit(raw64(path, step, lane));
    }

    double normal(std::uint64_t path, std::uint32_t step, std::uint32_t lane) const {
        const std::uint32_t pair = lane >> 1;
        const std::uint64_t ra = raw64(path, step, 2 * pair);
        const std::uint64_t rb = raw64(path, step, 2 * pair + 1);
        double u1 = to_unit(ra);
        const double u2 = to_unit(rb);
        if (u1 <= 0.0) u1 = 0x1p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        return (lane & 1u) == 0 ? r * std::cos(theta) : r * std::sin(theta);
    }

  private:
    std::uint64_t raw64(std::uint64_t path, std::uint32_t step, std::uint32_t lane64) const {
        // Two 64-bit words per Philox block; lane64 selects word and block.
        const std::uint32_t sub = lane64 >> 1;
        const auto out = philox::block(
            seed_, {static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), step, sub});
        if ((lane64 & 1u) == 0)
            return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
        return (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    }

    static double to_unit(std::uint64_t bits) {
        return static_cast<double>(bits >> 11) * 0x1p-53;
    }

    std::uint64_t seed_;
};

} // namespace duallab
