#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace udjfl {

// splitmix64 mixer. Used to derive independent stream seeds from a master
// seed; the raw engine output of std::mt19937_64 is fully specified by the
// standard, so a fixed seed reproduces bit-identical streams everywhere.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

// Stream-purpose tags for seed derivation. Fixed constants so that runs are
// reproducible and streams for different purposes never collide.
namespace seed_tag {
inline constexpr std::uint64_t client = 0x01;
inline constexpr std::uint64_t server_init = 0x02;
inline constexpr std::uint64_t solo_init = 0x03;
inline constexpr std::uint64_t solo_shuffle = 0x04;
inline constexpr std::uint64_t round_shuffle = 0x05;
inline constexpr std::uint64_t data_gen = 0x06;
inline constexpr std::uint64_t partition = 0x07;
inline constexpr std::uint64_t split = 0x08;
}  // namespace seed_tag

// Deterministic RNG with hand-rolled distributions. std::uniform_*_distribution
// is not bit-specified across standard libraries, so distributions here are
// implemented directly on top of the engine's 64-bit output.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    // Standard normal via Box-Muller; the spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace udjfl
