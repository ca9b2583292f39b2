#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace ash {

// Counter-based deterministic PRNG: every draw is a fixed 64-bit hash of
// (key, counter), so independent streams can be derived per (seed, stream id)
// without shared state. Identical seed + stream always replays the same
// sequence, on any platform.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(seed ^ 0x6a09e667f3bcc908ull, stream)) {}

    std::uint64_t next_u64() { return mix(key_, counter_++); }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe to pass to log().
    double next_open_double() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; draws the underlying stream in pairs.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_open_double();
        const double u2 = next_double();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * kPi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    // Uniform integer in [0, n); rejection sampling avoids modulo bias.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = ~0ull - ~0ull % n;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_below(i)]);
        }
    }

private:
    static constexpr double kPi = 3.14159265358979323846;

    static std::uint64_t mix(std::uint64_t key, std::uint64_t ctr) {
        std::uint64_t z = key + 0x9e3779b97f4a7c15ull * (ctr + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace ash
