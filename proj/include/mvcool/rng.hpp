#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace mvcool {

// Counter-based deterministic generator. Each draw hashes (key, counter)
// through splitmix64, so streams keyed by (seed, trajectory, stage) give
// identical values regardless of execution order across threads.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ kSalt)) {}

    CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream_ids)
        : key_(mix(seed ^ kSalt)) {
        for (auto id : stream_ids) key_ = mix(key_ ^ mix(id + kSalt));
    }

    // Derive an independent substream without touching this stream's counter.
    CounterRng substream(std::uint64_t id) const {
        CounterRng r(*this);
        r.key_ = mix(key_ ^ mix(id + kSalt));
        r.counter_ = 0;
        return r;
    }

    std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; consumes exactly two uniforms per call (no caching, so the
    // stream position stays a pure function of the call count).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double gaussian(double mean, double sd) { return mean + sd * gaussian(); }

    // Thermal (geometric) occupancy sample: P(n) = nbar^n / (nbar+1)^(n+1).
    int thermal_occupation(double nbar) {
        if (nbar <= 0.0) return 0;
        double u = uniform();
        if (u <= 0.0) u = 0x1.0p-53;
        const double r = nbar / (nbar + 1.0);
        return static_cast<int>(std::floor(std::log(u) / std::log(r)));
    }

    int binomial(int shots, double p) {
        int k = 0;
        for (int i = 0; i < shots; ++i)
            if (uniform() < p) ++k;
        return k;
    }

private:
    static constexpr std::uint64_t kSalt = 0x8e24aa5c5df3f6b1ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace mvcool
