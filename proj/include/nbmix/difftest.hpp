#pragma once

#include <span>
#include <string>
#include <vector>

#include "nbmix/count_matrix.hpp"
#include "nbmix/em.hpp"

namespace nbmix {

enum class TestKind { Difference, Ratio, LogRatio };

const char* to_string(TestKind kind);
// parses "difference" / "ratio" / "logratio" (case-insensitive)
TestKind test_kind_from_string(const std::string& name);

struct GeneTestResult {
    std::string gene_id;
    TestKind kind = TestKind::Difference;
    double statistic = 0.0;
    double p_value = 1.0;
    double p_adjusted = 1.0;
    bool defined = false; // false: statistic undefined for this gene, excluded from BH
};

struct TestTable {
    TestKind kind = TestKind::Difference;
    double level = 0.05;
    std::vector<GeneTestResult> rows;
};

// Var(lambda_hat) for one gene/condition cell: the plug-in mixture variance
// lambda*(1 + lambda * sum_k tau_k/alpha_k) / n_j, with the finite-sample
// correction n_j/(n_j-1) when bias_correct is set.
double variance_lambda_hat(std::span<const double> gene_counts_j, double lambda_hat,
                           std::span<const double> tau_row, std::span<const double> alphas,
                           bool bias_correct);

// Full per-gene variance bundle. overdisp_mix is the posterior-weighted
// sum_k tau_k/alpha_k, so it lies between 1/max(alpha) and 1/min(alpha).
struct GeneVariance {
    std::vector<double> var_lambda_hat; // one entry per condition
    double overdisp_mix = 0.0;
};

GeneVariance gene_variance(const CountMatrix& data, std::size_t gene,
                           std::span<const double> lambda_row, std::span<const double> tau_row,
                           std::span<const double> alphas, bool bias_correct);

struct Statistic {
    double value = 0.0;
    bool defined = false;
};

// (lam1 - lam2) / sqrt(var1 + var2); undefined when both variances are zero.
Statistic difference_test(double lam1, double lam2, double var1, double var2);

// (lam1/lam2 - 1) / sqrt(delta-method variance of the ratio).
Statistic ratio_test(double lam1, double lam2, double var1, double var2);

// (ln lam1 - ln lam2) / sqrt(var_sum1/y_sum1^2 + var_sum2/y_sum2^2), where
// y_sumj is the condition total count and var_sumj = Var(y_j+).
Statistic logratio_test(double y_sum1, double y_sum2, double lam1, double lam2, double var_sum1,
                        double var_sum2);

// 2 * (1 - Phi(|stat|))
double two_sided_p(double statistic);

// Benjamini-Hochberg step-up adjustment, clipped at 1, in input order.
std::vector<double> bh_adjust(const std::vector<double>& p_values);

// Full per-gene test pass over a fitted two-condition model. BH is applied
// within each test kind across defined genes only.
std::vector<TestTable> run_tests(const FitResult& fit, const CountMatrix& data,
                                 const std::vector<TestKind>& kinds, double level,
                                 bool bias_correct = true);

} // namespace nbmix
