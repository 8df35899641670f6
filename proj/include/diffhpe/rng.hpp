#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace diffhpe {

// Deterministic random stream. Distributions are implemented here instead of
// relying on <random> distribution classes, whose output is
// implementation-defined; this keeps datasets and training runs bit-identical
// across standard libraries.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; second value of each pair is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(gen_() % i);
            std::swap(xs[i - 1], xs[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Hash-derived child streams. Forking by (tag0, tag1, tag2) gives every clip,
// epoch, or hypothesis its own independent stream, so parallel workers never
// contend for one generator and results do not depend on scheduling.
struct SeedSequence {
    uint64_t base = 0;

    explicit SeedSequence(uint64_t seed) : base(seed) {}

    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    uint64_t derive(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
        uint64_t h = splitmix(base ^ 0x853c49e6748fea9bULL);
        h = splitmix(h ^ a);
        h = splitmix(h ^ b);
        h = splitmix(h ^ c);
        return h;
    }

    Rng stream(uint64_t a, uint64_t b = 0, uint64_t c = 0) const { return Rng(derive(a, b, c)); }
};

}  // namespace diffhpe
