#include "nbmix/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "nbmix/errors.hpp"
#include "nbmix/nb.hpp"
#include "nbmix/parallel.hpp"
#include "nbmix/rng.hpp"

namespace nbmix {

namespace {

constexpr const char* kModule = "em-engine";
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kEmptyComponentMass = 1e-8;

// ln sum_k exp(a_k) over a contiguous row; -inf entries drop out
double log_sum_exp(std::span<const double> a) {
    double m = kNegInf;
    for (double v : a) m = std::max(m, v);
    if (m == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double v : a) acc += std::exp(v - m);
    return m + std::log(acc);
}

// s[k] = sum over samples of nb_log_pmf(y_s; lambda[cond(s)], alpha_k)
void component_log_liks(std::span<const double> gene_row,
                        std::span<const int> condition_of_sample,
                        std::span<const double> lambda_row,
                        std::span<const double> alphas,
                        std::span<double> out) {
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        double acc = 0.0;
        for (std::size_t s = 0; s < gene_row.size(); ++s) {
            acc += nb_log_pmf(gene_row[s],
                              {lambda_row[static_cast<std::size_t>(condition_of_sample[s])],
                               alphas[k]});
        }
        out[k] = acc;
    }
}

struct EStepResult {
    Responsibilities tau;
    std::vector<double> gene_loglik; // per-gene mixture log density
    double loglik = 0.0;
};

// One E-step pass: responsibilities plus the log-likelihood at `params`.
// Per-gene work is parallel; reductions run in gene order afterwards, so the
// result is identical for any thread count.
EStepResult e_step_impl(const CountMatrix& data, const MixtureParams& params, int threads,
                        bool throw_on_degenerate) {
    const std::size_t p = data.n_genes();
    const std::size_t k_count = params.n_components();
    const std::size_t d = data.n_conditions();

    std::vector<double> log_w(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        log_w[k] = params.weights[k] > 0.0 ? std::log(params.weights[k]) : kNegInf;
    }

    EStepResult out;
    out.tau.tau.assign(p * k_count, 0.0);
    out.tau.n_genes = p;
    out.tau.n_components = k_count;
    out.gene_loglik.assign(p, 0.0);

    parallel_for(0, p, threads, [&](std::size_t i) {
        std::vector<double> terms(k_count);
        component_log_liks(data.gene_row(i), data.condition_of_sample,
                           params.lambda_row(i, d), params.alphas, terms);
        for (std::size_t k = 0; k < k_count; ++k) terms[k] += log_w[k];
        const double lse = log_sum_exp(terms);
        out.gene_loglik[i] = lse;
        if (lse == kNegInf) return; // handled after the join
        double* tau_row = out.tau.tau.data() + i * k_count;
        double norm = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
            tau_row[k] = std::exp(terms[k] - lse);
            norm += tau_row[k];
        }
        for (std::size_t k = 0; k < k_count; ++k) tau_row[k] /= norm;
    });

    for (std::size_t i = 0; i < p; ++i) {
        if (out.gene_loglik[i] == kNegInf && throw_on_degenerate) {
            fail(ErrorKind::Degeneracy, kModule,
                 "gene '" + data.gene_ids[i] + "' has zero likelihood under every component");
        }
        out.loglik += out.gene_loglik[i];
    }
    return out;
}

// Root of F(alpha) = ln(alpha) + 1 - psi(alpha) + mean_score, which is
// strictly decreasing in alpha. Newton on t = ln(alpha), safeguarded by the
// bracket [alpha_min, alpha_max]; solved to near machine precision so the
// update is an exact M-step maximizer (EM ascent then holds by theory).
double solve_alpha_root(double mean_score, double warm_start, double alpha_min, double alpha_max) {
    const auto score = [&](double alpha) {
        return std::log(alpha) + 1.0 - digamma(alpha) + mean_score;
    };
    if (score(alpha_min) <= 0.0) return alpha_min;
    if (score(alpha_max) >= 0.0) return alpha_max;

    double t_lo = std::log(alpha_min);
    double t_hi = std::log(alpha_max);
    double t = std::log(std::clamp(warm_start, alpha_min, alpha_max));
    for (int iter = 0; iter < 200; ++iter) {
        const double alpha = std::exp(t);
        const double f = score(alpha);
        if (f > 0.0) {
            t_lo = t;
        } else {
            t_hi = t;
        }
        if (std::fabs(f) < 1e-13 || t_hi - t_lo < 1e-13) break;
        const double dfdt = 1.0 - alpha * trigamma(alpha); // < 0
        double t_next = t - f / dfdt;
        if (!(t_next > t_lo) || !(t_next < t_hi)) {
            t_next = 0.5 * (t_lo + t_hi);
        }
        t = t_next;
    }
    return std::exp(t);
}

// Deterministic moment-based starting dispersions: per-gene alpha from the
// pooled mean/variance, clipped, then K evenly spaced quantiles.
std::vector<double> initial_alphas(const CountMatrix& data, std::size_t k_count,
                                   const FitConfig& config) {
    const std::size_t p = data.n_genes();
    const std::size_t n = data.n_samples();
    std::vector<double> mom(p);
    for (std::size_t i = 0; i < p; ++i) {
        const auto row = data.gene_row(i);
        double mean = 0.0;
        for (double y : row) mean += y;
        mean /= static_cast<double>(n);
        double var = 0.0;
        if (n >= 2) {
            for (double y : row) var += (y - mean) * (y - mean);
            var /= static_cast<double>(n - 1);
        }
        double alpha = config.init_clip_hi; // at or under Poisson variance
        if (mean > 0.0 && var > mean) {
            alpha = mean * mean / (var - mean);
        }
        mom[i] = std::clamp(alpha, config.init_clip_lo, config.init_clip_hi);
    }
    std::sort(mom.begin(), mom.end());
    std::vector<double> alphas(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(k_count);
        const double pos = q * static_cast<double>(p - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, p - 1);
        const double frac = pos - static_cast<double>(lo);
        alphas[k] = mom[lo] * (1.0 - frac) + mom[hi] * frac;
    }
    return alphas;
}

struct EmRun {
    MixtureParams params;
    Responsibilities tau;
    std::vector<double> loglik_trace;
    int n_iter = 0;
    bool converged = false;
    bool empty_component = false;
};

void sort_components(std::vector<double>& alphas, std::vector<double>& weights) {
    const std::size_t k_count = alphas.size();
    std::vector<std::size_t> order(k_count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return alphas[a] < alphas[b]; });
    std::vector<double> a2(k_count), w2(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        a2[k] = alphas[order[k]];
        w2[k] = weights[order[k]];
    }
    alphas = std::move(a2);
    weights = std::move(w2);
}

// Projected remaining movement of a linearly converging sequence given the
// last two step sizes (Aitken). Unknown or non-contracting ratios project to
// infinity unless the step has already collapsed.
double projected_remaining(double step, double prev_step) {
    if (step <= 0.0) return 0.0;
    if (prev_step <= 0.0 || step >= prev_step) {
        return step < 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    const double ratio = step / prev_step;
    return step * ratio / (1.0 - ratio);
}

EmRun run_em(const CountMatrix& data, const std::vector<double>& lambda,
             std::vector<double> alphas0, const FitConfig& config) {
    const std::size_t k_count = alphas0.size();

    EmRun run;
    run.params.lambda = lambda;
    run.params.alphas = std::move(alphas0);
    run.params.weights.assign(k_count, 1.0 / static_cast<double>(k_count));
    sort_components(run.params.alphas, run.params.weights);

    double loglik_prev = 0.0;
    bool have_prev = false;
    bool need_final_e_step = true;
    bool alphas_settled = false;
    std::vector<double> prev_step(k_count, -1.0);
    EStepResult estep;

    for (int iter = 0; iter < config.max_iter; ++iter) {
        estep = e_step_impl(data, run.params, config.threads, true);
        run.loglik_trace.push_back(estep.loglik);
        if (have_prev && alphas_settled &&
            std::fabs(estep.loglik - loglik_prev) / (std::fabs(estep.loglik) + 1.0) < config.tol) {
            run.converged = true;
            need_final_e_step = false;
            break;
        }
        loglik_prev = estep.loglik;
        have_prev = true;

        bool empty = false;
        const std::vector<double> alphas_before = run.params.alphas;
        run.params.alphas =
            m_step_alpha(data, lambda, estep.tau, run.params.alphas, config, &empty);
        run.empty_component = run.empty_component || empty;
        run.params.weights = m_step_weights(estep.tau);
        sort_components(run.params.alphas, run.params.weights);

        alphas_settled = true;
        for (std::size_t k = 0; k < k_count; ++k) {
            const double step =
                std::fabs(std::log(run.params.alphas[k]) - std::log(alphas_before[k]));
            if (projected_remaining(step, prev_step[k]) >= config.param_tol) {
                alphas_settled = false;
            }
            prev_step[k] = step;
        }
        ++run.n_iter;
    }

    if (need_final_e_step) {
        estep = e_step_impl(data, run.params, config.threads, true);
        run.loglik_trace.push_back(estep.loglik);
    }
    run.tau = std::move(estep.tau);
    return run;
}

} // namespace

void MixtureParams::validate(std::size_t p, std::size_t d) const {
    const std::size_t k_count = n_components();
    if (k_count == 0 || weights.size() != k_count) {
        fail(ErrorKind::Shape, kModule, "weights/alphas must be non-empty and the same length");
    }
    if (lambda.size() != p * d) {
        fail(ErrorKind::Shape, kModule,
             "lambda has " + std::to_string(lambda.size()) + " cells, expected " +
                 std::to_string(p * d));
    }
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) {
            fail(ErrorKind::ParameterDomain, kModule, "weights must be non-negative");
        }
        wsum += w;
    }
    if (std::fabs(wsum - 1.0) > 1e-12) {
        fail(ErrorKind::ParameterDomain, kModule,
             "weights must sum to 1, got " + std::to_string(wsum));
    }
    for (std::size_t k = 0; k < k_count; ++k) {
        if (!(alphas[k] > 0.0) || !std::isfinite(alphas[k])) {
            fail(ErrorKind::ParameterDomain, kModule, "alphas must be positive");
        }
        if (k > 0 && alphas[k] < alphas[k - 1]) {
            fail(ErrorKind::ParameterDomain, kModule, "alphas must be in ascending order");
        }
    }
    for (double l : lambda) {
        if (l < 0.0 || !std::isfinite(l)) {
            fail(ErrorKind::ParameterDomain, kModule, "lambda must be non-negative and finite");
        }
    }
}

void Responsibilities::validate() const {
    if (tau.size() != n_genes * n_components) {
        fail(ErrorKind::Shape, kModule, "responsibilities dimensions are inconsistent");
    }
    for (std::size_t i = 0; i < n_genes; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n_components; ++k) {
            const double t = at(i, k);
            if (t < -1e-12 || t > 1.0 + 1e-12) {
                fail(ErrorKind::ParameterDomain, kModule, "responsibilities must lie in [0,1]");
            }
            sum += t;
        }
        if (std::fabs(sum - 1.0) > 1e-10) {
            fail(ErrorKind::ParameterDomain, kModule,
                 "responsibility row " + std::to_string(i) + " sums to " + std::to_string(sum));
        }
    }
}

double mixture_gene_log_density(std::span<const double> gene_row,
                                std::span<const int> condition_of_sample,
                                std::span<const double> lambda_row,
                                std::span<const double> alphas,
                                std::span<const double> weights) {
    if (gene_row.size() != condition_of_sample.size() || alphas.size() != weights.size() ||
        alphas.empty()) {
        fail(ErrorKind::Shape, kModule, "mixture_gene_log_density dimension mismatch");
    }
    std::vector<double> terms(alphas.size());
    component_log_liks(gene_row, condition_of_sample, lambda_row, alphas, terms);
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        terms[k] += weights[k] > 0.0 ? std::log(weights[k]) : kNegInf;
    }
    return log_sum_exp(terms);
}

double total_log_likelihood(const CountMatrix& data, const MixtureParams& params) {
    data.validate();
    params.validate(data.n_genes(), data.n_conditions());
    const auto estep = e_step_impl(data, params, 1, false);
    return estep.loglik;
}

Responsibilities e_step(const CountMatrix& data, const MixtureParams& params) {
    data.validate();
    params.validate(data.n_genes(), data.n_conditions());
    return e_step_impl(data, params, 1, true).tau;
}

std::vector<double> m_step_lambda(const CountMatrix& data) {
    const std::size_t p = data.n_genes();
    const std::size_t d = data.n_conditions();
    const auto groups = data.samples_by_condition();
    std::vector<double> lambda(p * d, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        const auto row = data.gene_row(i);
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int s : groups[j]) acc += row[static_cast<std::size_t>(s)];
            lambda[i * d + j] = acc / static_cast<double>(groups[j].size());
        }
    }
    return lambda;
}

std::vector<double> m_step_alpha(const CountMatrix& data, const std::vector<double>& lambda,
                                 const Responsibilities& tau,
                                 const std::vector<double>& alphas_prev, const FitConfig& config,
                                 bool* empty_component) {
    const std::size_t p = data.n_genes();
    const std::size_t n = data.n_samples();
    const std::size_t d = data.n_conditions();
    const std::size_t k_count = alphas_prev.size();
    if (tau.n_genes != p || tau.n_components != k_count || lambda.size() != p * d) {
        fail(ErrorKind::Shape, kModule, "m_step_alpha dimension mismatch");
    }
    if (empty_component) *empty_component = false;

    // Per-gene, per-component sums of the conditional expectations, with the
    // expectations evaluated at the previous dispersions.
    std::vector<double> e_ln_u(p * k_count);
    std::vector<double> e_u(p * k_count);
    parallel_for(0, p, config.threads, [&](std::size_t i) {
        const auto row = data.gene_row(i);
        for (std::size_t k = 0; k < k_count; ++k) {
            const double alpha = alphas_prev[k];
            double acc_ln = 0.0;
            double acc_u = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
                const double lam =
                    lambda[i * d + static_cast<std::size_t>(data.condition_of_sample[s])];
                acc_ln += digamma(row[s] + alpha) - std::log(lam + alpha);
                acc_u += (row[s] + alpha) / (lam + alpha);
            }
            e_ln_u[i * k_count + k] = acc_ln;
            e_u[i * k_count + k] = acc_u;
        }
    });

    std::vector<double> alphas(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
        double mass = 0.0;
        double score_sum = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            const double t = tau.at(i, k);
            mass += t;
            score_sum += t * (e_ln_u[i * k_count + k] - e_u[i * k_count + k]);
        }
        if (mass < kEmptyComponentMass) {
            alphas[k] = alphas_prev[k];
            if (empty_component) *empty_component = true;
            continue;
        }
        const double mean_score = score_sum / (mass * static_cast<double>(n));
        if (!std::isfinite(mean_score)) {
            fail(ErrorKind::Degeneracy, kModule,
                 "non-finite dispersion objective for component " + std::to_string(k));
        }
        alphas[k] =
            solve_alpha_root(mean_score, alphas_prev[k], config.alpha_min, config.alpha_max);
    }
    return alphas;
}

std::vector<double> m_step_weights(const Responsibilities& tau) {
    std::vector<double> weights(tau.n_components, 0.0);
    for (std::size_t i = 0; i < tau.n_genes; ++i) {
        for (std::size_t k = 0; k < tau.n_components; ++k) {
            weights[k] += tau.at(i, k);
        }
    }
    for (double& w : weights) w /= static_cast<double>(tau.n_genes);
    return weights;
}

InformationCriteria information_criteria(double loglik, std::size_t p, std::size_t d,
                                         std::size_t k, const Responsibilities& tau) {
    const double h = static_cast<double>(p * d + 2 * k - 1);
    double entropy = 0.0;
    for (double t : tau.tau) {
        if (t > 0.0) entropy -= t * std::log(t);
    }
    InformationCriteria ic;
    ic.aic = -2.0 * loglik + 2.0 * h;
    ic.bic = -2.0 * loglik + h * std::log(static_cast<double>(p));
    ic.icl_bic = ic.bic + 2.0 * entropy;
    return ic;
}

FitResult fit(const CountMatrix& data, int k, const FitConfig& config) {
    data.validate();
    if (k < 1) {
        fail(ErrorKind::ParameterDomain, kModule, "K must be >= 1");
    }
    const std::size_t p = data.n_genes();
    if (p < static_cast<std::size_t>(k)) {
        fail(ErrorKind::Shape, kModule,
             "K=" + std::to_string(k) + " components but only " + std::to_string(p) + " genes");
    }

    const auto lambda = m_step_lambda(data);
    const auto base_alphas = initial_alphas(data, static_cast<std::size_t>(k), config);

    EmRun best;
    bool have_best = false;
    Rng jitter(config.seed);
    for (int attempt = 0; attempt <= std::max(0, config.restarts); ++attempt) {
        std::vector<double> alphas0 = base_alphas;
        if (attempt > 0) {
            for (double& a : alphas0) {
                a = std::clamp(a * std::exp(jitter.normal(0.0, 0.5)), config.init_clip_lo,
                               config.init_clip_hi);
            }
        }
        EmRun run = run_em(data, lambda, std::move(alphas0), config);
        if (!have_best || run.loglik_trace.back() > best.loglik_trace.back()) {
            best = std::move(run);
            have_best = true;
        }
    }

    FitResult result;
    result.params = std::move(best.params);
    result.tau = std::move(best.tau);
    result.loglik_trace = std::move(best.loglik_trace);
    result.n_iter = best.n_iter;
    result.converged = best.converged;
    result.empty_component = best.empty_component;
    const auto ic = information_criteria(result.loglik_trace.back(), p, data.n_conditions(),
                                         static_cast<std::size_t>(k), result.tau);
    result.aic = ic.aic;
    result.bic = ic.bic;
    result.icl_bic = ic.icl_bic;
    return result;
}

KSelection select_k(const CountMatrix& data, int k_min, int k_max, const FitConfig& config) {
    if (k_min < 1 || k_max < k_min) {
        fail(ErrorKind::Config, kModule, "invalid K range");
    }
    KSelection sel;
    for (int k = k_min; k <= k_max; ++k) {
        KSelectionRow row;
        row.k = k;
        try {
            const FitResult res = fit(data, k, config);
            row.loglik = res.loglik();
            row.aic = res.aic;
            row.bic = res.bic;
            row.icl_bic = res.icl_bic;
            row.n_iter = res.n_iter;
            row.converged = res.converged;
        } catch (const Error& e) {
            row.error = e.what();
        }
        sel.rows.push_back(std::move(row));
    }
    double best_aic = std::numeric_limits<double>::infinity();
    double best_bic = best_aic;
    double best_icl = best_aic;
    for (const auto& row : sel.rows) {
        if (!row.error.empty()) continue;
        if (row.aic < best_aic) {
            best_aic = row.aic;
            sel.best_aic = row.k;
        }
        if (row.bic < best_bic) {
            best_bic = row.bic;
            sel.best_bic = row.k;
        }
        if (row.icl_bic < best_icl) {
            best_icl = row.icl_bic;
            sel.best_icl_bic = row.k;
        }
    }
    return sel;
}

} // namespace nbmix
