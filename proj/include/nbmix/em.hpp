#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nbmix/count_matrix.hpp"

namespace nbmix {

// Parameters of the K-component NB mixture: a mean per gene/condition cell,
// plus component weights and dispersions shared across genes. Components
// differ only in alpha; alphas are kept in ascending order.
struct MixtureParams {
    std::vector<double> lambda;  // row-major, p x d
    std::vector<double> weights; // length K, simplex
    std::vector<double> alphas;  // length K, ascending

    std::size_t n_components() const { return alphas.size(); }
    std::span<const double> lambda_row(std::size_t gene, std::size_t d) const {
        return {lambda.data() + gene * d, d};
    }
    void validate(std::size_t p, std::size_t d) const;
};

// Posterior component memberships, one row per gene, rows sum to 1.
struct Responsibilities {
    std::vector<double> tau; // row-major, p x K
    std::size_t n_genes = 0;
    std::size_t n_components = 0;

    double at(std::size_t gene, std::size_t k) const { return tau[gene * n_components + k]; }
    std::span<const double> row(std::size_t gene) const {
        return {tau.data() + gene * n_components, n_components};
    }
    void validate() const;
};

struct FitConfig {
    int max_iter = 500;
    double tol = 1e-8;          // stop when |dloglik| / (|loglik| + 1) < tol ...
    double param_tol = 1e-4;    // ... and the Aitken-projected remaining movement of
                                // every ln(alpha_k) is below this, so dispersions are
                                // within ~0.01% of their EM fixed point
    std::uint64_t seed = 0;     // only used when restarts > 0
    int restarts = 0;           // extra EM runs from jittered dispersions
    int threads = 1;            // per-gene parallelism; results are schedule-independent
    double alpha_min = 1e-3;
    double alpha_max = 1e6;
    double init_clip_lo = 0.5;  // clip range for moment-based dispersion init
    double init_clip_hi = 600.0;
    double newton_tol = 1e-6;   // |mean score| threshold for the alpha solver
};

struct InformationCriteria {
    double aic = 0.0;
    double bic = 0.0;
    double icl_bic = 0.0;
};

struct FitResult {
    MixtureParams params;
    Responsibilities tau;
    std::vector<double> loglik_trace;
    int n_iter = 0;
    bool converged = false;
    bool empty_component = false; // some component lost all posterior mass
    double aic = 0.0;
    double bic = 0.0;
    double icl_bic = 0.0;

    double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

// ln sum_k w_k prod_s NegBin(y_s; lambda[cond(s)], alpha_k), via log-sum-exp.
double mixture_gene_log_density(std::span<const double> gene_row,
                                std::span<const int> condition_of_sample,
                                std::span<const double> lambda_row,
                                std::span<const double> alphas,
                                std::span<const double> weights);

double total_log_likelihood(const CountMatrix& data, const MixtureParams& params);

// Bayes posterior tau_ik over components, computed in log space. Throws a
// degeneracy error naming the gene if every component has zero likelihood.
Responsibilities e_step(const CountMatrix& data, const MixtureParams& params);

// Per-condition sample means; independent of the mixture, so computed once.
std::vector<double> m_step_lambda(const CountMatrix& data);

// One dispersion update per component: maximizes the expected complete-data
// gamma term with conditional expectations frozen at alphas_prev, via a
// safeguarded Newton iteration on ln(alpha). A component whose posterior
// column mass is below 1e-8 keeps its previous alpha; *empty_component is
// set when that happens (may be null).
std::vector<double> m_step_alpha(const CountMatrix& data,
                                 const std::vector<double>& lambda,
                                 const Responsibilities& tau,
                                 const std::vector<double>& alphas_prev,
                                 const FitConfig& config = {},
                                 bool* empty_component = nullptr);

// Column means of tau.
std::vector<double> m_step_weights(const Responsibilities& tau);

// AIC/BIC/ICL-BIC with h = p*d + 2K - 1 free parameters. ICL-BIC adds twice
// the entropy of the posterior classification to the BIC.
InformationCriteria information_criteria(double loglik, std::size_t p, std::size_t d,
                                         std::size_t k, const Responsibilities& tau);

FitResult fit(const CountMatrix& data, int k, const FitConfig& config = {});

struct KSelectionRow {
    int k = 0;
    double loglik = 0.0;
    double aic = 0.0;
    double bic = 0.0;
    double icl_bic = 0.0;
    int n_iter = 0;
    bool converged = false;
    std::string error; // empty on success
};

struct KSelection {
    std::vector<KSelectionRow> rows;
    int best_aic = -1;     // K achieving the minimum, -1 if no fit succeeded
    int best_bic = -1;
    int best_icl_bic = -1;
};

KSelection select_k(const CountMatrix& data, int k_min, int k_max, const FitConfig& config = {});

} // namespace nbmix
