#pragma once

#include <cstdint>

namespace nbmix {

// Negative binomial parametrized by its mean `lambda` and dispersion
// `alpha`: E[Y] = lambda, Var[Y] = lambda * (1 + lambda / alpha).
// Larger alpha means closer to Poisson.
struct NBParams {
    double lambda = 0.0;
    double alpha = 1.0;
};

// ln Gamma(x) for x > 0, accurate to >= 10 significant digits on (0, 1e6].
double log_gamma(double x);

// psi(x) = d/dx ln Gamma(x), x > 0.
double digamma(double x);

// psi'(x), x > 0. Internal helper for the dispersion Newton solver.
double trigamma(double x);

// Log pmf of NegBin(lambda, alpha) at y >= 0, in gamma-function form so
// alpha need not be an integer. lambda = 0 is the point mass at zero:
// returns 0 for y = 0 and -inf for y > 0.
double nb_log_pmf(double y, const NBParams& params);

// E(u | y, z_k = 1) = (y + alpha) / (lambda + alpha): posterior mean of the
// Gamma(y + alpha, lambda + alpha) heterogeneity factor.
double e_u_given_y_z(double y, double lambda, double alpha);

// E(ln u | y, z_k = 1) = psi(y + alpha) - ln(lambda + alpha).
double e_ln_u_given_y_z(double y, double lambda, double alpha);

} // namespace nbmix
