#pragma once

#include <cstdint>
#include <random>

#include "mot/tensor.hpp"

namespace mot {

/// Seeded RNG wrapper. Every stochastic component takes one of these, never a
/// global; substreams are derived with mix() so call order elsewhere cannot
/// perturb results.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform(double a, double b) {
        std::uniform_real_distribution<double> d(a, b);
        return d(gen_);
    }
    double normal(double mu, double sigma) {
        std::normal_distribution<double> d(mu, sigma);
        return d(gen_);
    }
    int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
        std::uniform_int_distribution<int64_t> d(lo, hi);
        return d(gen_);
    }
    bool bernoulli(double p) {
        std::bernoulli_distribution d(p);
        return d(gen_);
    }

    // splitmix64 finalizer; combines seeds for independent substreams
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
};

Tensor rand_uniform(Rng& rng, Shape shape, double a, double b, bool requires_grad = false);
Tensor rand_normal(Rng& rng, Shape shape, double mu, double sigma, bool requires_grad = false);

}  // namespace mot
