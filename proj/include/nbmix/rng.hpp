#pragma once

#include <cstdint>

namespace nbmix {

// Deterministic, portable random stream: xoshiro256++ state seeded through
// splitmix64. All distributions are implemented here (not taken from
// <random>) so that identical seeds give identical draws on every platform.
// Algorithms: Box-Muller normals, Marsaglia-Tsang gammas, Knuth (mean < 10)
// and Hormann PTRS (mean >= 10) Poisson. See README for the committed spec.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // uniform on [0, 1)
    double uniform();
    // uniform on (0, 1], safe under log()
    double uniform_open();
    double uniform(double lo, double hi);

    double normal(double mean = 0.0, double sd = 1.0);

    // unit-scale Gamma(shape)
    double gamma(double shape);
    // Gamma(shape, rate), mean shape/rate
    double gamma(double shape, double rate);

    long poisson(double mean);

    // NegBin(lambda, alpha) by composition: U ~ Gamma(alpha, alpha),
    // Y | U ~ Poisson(lambda * U)
    long negative_binomial(double lambda, double alpha);

private:
    std::uint64_t state_[4];
};

} // namespace nbmix
