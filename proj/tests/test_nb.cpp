#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "nbmix/errors.hpp"
#include "nbmix/nb.hpp"
#include "nbmix/rng.hpp"

using namespace nbmix;

namespace {

constexpr double kEulerGamma = 0.57721566490153286061;

// reference NB log-pmf built on the system lgamma, independent of the
// library's Lanczos kernel
double ref_nb_log_pmf(double y, double lambda, double alpha) {
    return std::lgamma(y + alpha) - std::lgamma(y + 1.0) - std::lgamma(alpha) +
           y * std::log(lambda / (lambda + alpha)) +
           alpha * std::log(alpha / (lambda + alpha));
}

double binom_coeff_form(long y, long alpha, double lambda) {
    // C(y+alpha-1, alpha-1) * (l/(l+a))^y * (a/(l+a))^a, integer alpha only
    double coeff = 1.0;
    for (long i = 1; i <= y; ++i) {
        coeff *= static_cast<double>(alpha - 1 + i) / static_cast<double>(i);
    }
    const double a = static_cast<double>(alpha);
    return coeff * std::pow(lambda / (lambda + a), static_cast<double>(y)) *
           std::pow(a / (lambda + a), a);
}

} // namespace

TEST_SUITE("nb") {

TEST_CASE("log_gamma known values to 10 digits") {
    CHECK(std::fabs(log_gamma(1.0)) < 1e-12);
    CHECK(std::fabs(log_gamma(2.0)) < 1e-12);
    CHECK(log_gamma(5.0) == doctest::Approx(std::log(24.0)).epsilon(1e-11));
    CHECK(log_gamma(0.5) == doctest::Approx(0.57236494292470008707).epsilon(1e-11));
    CHECK(log_gamma(10.0) == doctest::Approx(std::log(362880.0)).epsilon(1e-11));
}

TEST_CASE("log_gamma tracks the system lgamma across (0, 1e6]") {
    for (double lx = -6.0; lx <= 6.0; lx += 0.0625) {
        const double x = std::pow(10.0, lx);
        const double want = std::lgamma(x);
        const double got = log_gamma(x);
        CHECK(std::fabs(got - want) <= 1e-10 * (1.0 + std::fabs(want)));
    }
}

TEST_CASE("log_gamma rejects the non-positive domain") {
    CHECK_THROWS_AS(log_gamma(0.0), Error);
    CHECK_THROWS_AS(log_gamma(-3.0), Error);
}

TEST_CASE("digamma known values") {
    CHECK(digamma(1.0) == doctest::Approx(-kEulerGamma).epsilon(1e-11));
    CHECK(digamma(2.0) == doctest::Approx(1.0 - kEulerGamma).epsilon(1e-11));
    // psi(10.5) from psi(0.5) = -gamma - 2 ln 2 plus the recurrence
    double want = -kEulerGamma - 2.0 * std::log(2.0);
    for (int k = 0; k < 10; ++k) want += 1.0 / (0.5 + k);
    CHECK(digamma(10.5) == doctest::Approx(want).epsilon(1e-11));
    CHECK_THROWS_AS(digamma(0.0), Error);
}

TEST_CASE("digamma matches finite differences of log_gamma") {
    const double h = 1e-5;
    for (double x : {0.25, 0.8, 1.0, 3.7, 10.5, 144.0, 2e4}) {
        const double fd = (log_gamma(x + h) - log_gamma(x - h)) / (2.0 * h);
        CHECK(digamma(x) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("trigamma matches finite differences of digamma") {
    const double h = 1e-5;
    for (double x : {0.3, 1.0, 4.2, 25.0, 1e4}) {
        const double fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
        CHECK(trigamma(x) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("nb_log_pmf geometric cases") {
    CHECK(nb_log_pmf(0, {2.0, 1.0}) == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-12));
    CHECK(nb_log_pmf(1, {2.0, 1.0}) == doctest::Approx(std::log(2.0 / 9.0)).epsilon(1e-12));
}

TEST_CASE("nb_log_pmf matches a direct gamma-form evaluation") {
    // y=5, lambda=10, alpha=2: Gamma(7)/(Gamma(6) Gamma(2)) (10/12)^5 (2/12)^2
    const double want = std::log(720.0 / 120.0 * std::pow(10.0 / 12.0, 5) * std::pow(2.0 / 12.0, 2));
    CHECK(nb_log_pmf(5, {10.0, 2.0}) == doctest::Approx(want).epsilon(1e-12));
    for (double y : {0.0, 1.0, 7.0, 33.0, 250.0}) {
        for (double lambda : {0.4, 6.0, 120.0}) {
            for (double alpha : {0.7, 3.0, 77.0}) {
                const double want_log = ref_nb_log_pmf(y, lambda, alpha);
                CHECK(nb_log_pmf(y, {lambda, alpha}) ==
                      doctest::Approx(want_log).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("nb_log_pmf agrees with the binomial-coefficient form for integer alpha") {
    for (long alpha : {1L, 2L, 3L, 7L}) {
        for (double lambda : {0.5, 3.0, 40.0}) {
            for (long y = 0; y <= 30; ++y) {
                const double want = binom_coeff_form(y, alpha, lambda);
                const double got = std::exp(nb_log_pmf(static_cast<double>(y),
                                                       {lambda, static_cast<double>(alpha)}));
                CHECK(got == doctest::Approx(want).epsilon(1e-11));
            }
        }
    }
}

TEST_CASE("nb_log_pmf degenerate mean") {
    CHECK(nb_log_pmf(0, {0.0, 2.0}) == 0.0);
    CHECK(nb_log_pmf(3, {0.0, 2.0}) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("nb_log_pmf rejects invalid parameters") {
    CHECK_THROWS_AS(nb_log_pmf(1, {2.0, 0.0}), Error);
    CHECK_THROWS_AS(nb_log_pmf(1, {2.0, -1.0}), Error);
    CHECK_THROWS_AS(nb_log_pmf(1, {-2.0, 1.0}), Error);
    CHECK_THROWS_AS(nb_log_pmf(-1, {2.0, 1.0}), Error);
}

TEST_CASE("nb_log_pmf normalizes over the support") {
    for (double lambda : {0.1, 2.0, 37.0, 500.0}) {
        for (double alpha : {0.5, 1.0, 5.5, 80.0, 600.0}) {
            double sum = 0.0;
            const double r_inf = lambda / (lambda + alpha);
            bool bounded = false;
            for (long y = 0; y < 1000000; ++y) {
                const double f = std::exp(nb_log_pmf(static_cast<double>(y), {lambda, alpha}));
                sum += f;
                const double ry =
                    std::max(r_inf, (static_cast<double>(y) + alpha) /
                                        (static_cast<double>(y) + 1.0) * r_inf);
                if (ry < 1.0 && f * ry / (1.0 - ry) < 1e-9) {
                    bounded = true;
                    break;
                }
            }
            REQUIRE(bounded); // tail bound < 1e-9 reached
            CHECK(sum >= 1.0 - 1e-8);
            CHECK(sum <= 1.0 + 1e-10);
        }
    }
}

TEST_CASE("nb_log_pmf approaches the Poisson pmf for huge alpha") {
    const double alpha = 1e8;
    for (double lambda : {0.5, 5.0, 20.0}) {
        for (long y = 0; y <= 50; ++y) {
            const double nb = std::exp(nb_log_pmf(static_cast<double>(y), {lambda, alpha}));
            const double pois = std::exp(static_cast<double>(y) * std::log(lambda) - lambda -
                                         std::lgamma(static_cast<double>(y) + 1.0));
            CHECK(std::fabs(nb - pois) < 1e-6);
        }
    }
}

TEST_CASE("gamma-poisson composite draws match the NB moments") {
    const double lambda = 7.3;
    const double alpha = 2.5;
    const std::size_t n = 1000000;
    Rng rng(20240811);
    double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
    std::vector<double> draws(n);
    for (std::size_t i = 0; i < n; ++i) {
        draws[i] = static_cast<double>(rng.negative_binomial(lambda, alpha));
        sum += draws[i];
    }
    const double mean = sum / static_cast<double>(n);
    for (double y : draws) {
        const double c = y - mean;
        sum2 += c * c;
        sum4 += c * c * c * c;
    }
    const double var = sum2 / static_cast<double>(n - 1);
    const double m4 = sum4 / static_cast<double>(n);
    const double se_mean = std::sqrt(var / static_cast<double>(n));
    const double se_var = std::sqrt(std::max(0.0, m4 - var * var) / static_cast<double>(n));

    const double want_mean = lambda;
    const double want_var = lambda * (1.0 + lambda / alpha);
    CHECK(std::fabs(mean - want_mean) < 3.0 * se_mean);
    CHECK(std::fabs(var - want_var) < 3.0 * se_var);
}

TEST_CASE("conditional heterogeneity expectations") {
    CHECK(e_u_given_y_z(3, 3.0, 7.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(e_u_given_y_z(0, 0.0, 2.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(e_u_given_y_z(8, 4.0, 2.0) == doctest::Approx(10.0 / 6.0).epsilon(1e-14));

    CHECK(e_ln_u_given_y_z(0, 0.0, 1.0) == doctest::Approx(-kEulerGamma).epsilon(1e-11));
    CHECK(e_ln_u_given_y_z(1, 1.0, 1.0) ==
          doctest::Approx(1.0 - kEulerGamma - std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("e_ln_u matches a Monte Carlo Gamma(10,6) mean") {
    // y=8, lambda=4, alpha=2: posterior is Gamma(10, rate 6)
    const std::size_t n = 1000000;
    Rng rng(77);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(rng.gamma(10.0, 6.0));
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = (sum2 - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1);
    const double se = std::sqrt(var / static_cast<double>(n));
    CHECK(std::fabs(e_ln_u_given_y_z(8, 4.0, 2.0) - mean) < 3.0 * se);
}

TEST_CASE("Jensen: E(ln u) <= ln E(u)") {
    Rng rng(5);
    for (int rep = 0; rep < 2000; ++rep) {
        const double y = std::floor(rng.uniform(0.0, 400.0));
        const double lambda = rng.uniform(0.0, 300.0);
        const double alpha = std::exp(rng.uniform(std::log(1e-2), std::log(1e4)));
        CHECK(e_ln_u_given_y_z(y, lambda, alpha) <=
              std::log(e_u_given_y_z(y, lambda, alpha)) + 1e-12);
    }
}

} // TEST_SUITE("nb")
