#include "nbmix/rng.hpp"

#include <cmath>
#include <string>

#include "nbmix/errors.hpp"
#include "nbmix/nb.hpp"

namespace nbmix {

namespace {

constexpr const char* kModule = "simlab";
constexpr double kTwoPi = 6.28318530717958647692;

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
        word = splitmix64(s);
    }
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal(double mean, double sd) {
    // Box-Muller, cosine branch only: exactly two uniforms per draw
    const double u1 = uniform_open();
    const double u2 = uniform();
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0)) {
        fail(ErrorKind::ParameterDomain, kModule,
             "gamma shape must be > 0, got " + std::to_string(shape));
    }
    if (shape < 1.0) {
        return gamma(shape + 1.0) * std::pow(uniform_open(), 1.0 / shape);
    }
    // Marsaglia-Tsang squeeze
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x;
        double v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform_open();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

double Rng::gamma(double shape, double rate) {
    if (!(rate > 0.0)) {
        fail(ErrorKind::ParameterDomain, kModule,
             "gamma rate must be > 0, got " + std::to_string(rate));
    }
    return gamma(shape) / rate;
}

long Rng::poisson(double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean)) {
        fail(ErrorKind::ParameterDomain, kModule,
             "poisson mean must be finite and >= 0, got " + std::to_string(mean));
    }
    if (mean == 0.0) {
        return 0;
    }
    if (mean < 10.0) {
        // Knuth product-of-uniforms
        const double limit = std::exp(-mean);
        long k = 0;
        double prod = uniform_open();
        while (prod > limit) {
            ++k;
            prod *= uniform_open();
        }
        return k;
    }
    // Hormann's PTRS transformed rejection, valid for mean >= 10
    const double smu = std::sqrt(mean);
    const double b = 0.931 + 2.53 * smu;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);
    for (;;) {
        const double u = uniform() - 0.5;
        const double v = uniform_open();
        const double us = 0.5 - std::fabs(u);
        const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) {
            return static_cast<long>(kf);
        }
        if (kf < 0.0 || (us < 0.013 && v > us)) {
            continue;
        }
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            kf * log_mean - mean - log_gamma(kf + 1.0)) {
            return static_cast<long>(kf);
        }
    }
}

long Rng::negative_binomial(double lambda, double alpha) {
    if (!(alpha > 0.0) || !(lambda >= 0.0)) {
        fail(ErrorKind::ParameterDomain, kModule,
             "negative_binomial requires lambda >= 0 and alpha > 0");
    }
    if (lambda == 0.0) {
        return 0;
    }
    const double u = gamma(alpha, alpha);
    return poisson(lambda * u);
}

} // namespace nbmix
