#pragma once
// Deterministic RNG with self-owned distributions so outputs are
// reproducible across standard libraries.

#include <cmath>
#include <cstdint>
#include <random>

namespace clonescope {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // derive an independent stream, used by the per-image counter scheme
    Rng child(std::uint64_t counter) const {
        std::uint64_t s = seed_mix_ ^ (0x9e3779b97f4a7c15ULL * (counter + 1));
        Rng r(s);
        return r;
    }

    std::uint64_t raw() { return gen_(); }

    double uniform() { // [0,1)
        return double(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t uniform_int(std::uint64_t n) { // [0,n)
        // rejection sampling keeps this unbiased
        std::uint64_t limit = ~0ULL - (~0ULL % n);
        std::uint64_t v;
        do { v = gen_(); } while (v >= limit);
        return v % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(th);
        have_spare_ = true;
        return r * std::cos(th);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    int poisson(double lambda) {
        if (lambda <= 0) return 0;
        if (lambda < 30) {
            double l = std::exp(-lambda), p = 1.0;
            int k = 0;
            do {
                ++k;
                p *= uniform();
            } while (p > l);
            return k - 1;
        }
        // normal approximation is fine at these rates
        int v = int(std::lround(normal(lambda, std::sqrt(lambda))));
        return v < 0 ? 0 : v;
    }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = last - first;
        for (auto i = n - 1; i > 0; --i)
            std::swap(first[i], first[uniform_int(std::uint64_t(i) + 1)]);
    }

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_mix_ = gen_(); // consumed once, keeps child() decoupled from draw order
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace clonescope
