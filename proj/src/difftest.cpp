#include "nbmix/difftest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nbmix/errors.hpp"

namespace nbmix {

namespace {
constexpr const char* kModule = "difftest";
constexpr double kSqrt2 = 1.41421356237309504880;
}

const char* to_string(TestKind kind) {
    switch (kind) {
        case TestKind::Difference: return "difference";
        case TestKind::Ratio: return "ratio";
        case TestKind::LogRatio: return "logratio";
    }
    return "unknown";
}

TestKind test_kind_from_string(const std::string& name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "difference") return TestKind::Difference;
    if (lower == "ratio") return TestKind::Ratio;
    if (lower == "logratio" || lower == "log-ratio") return TestKind::LogRatio;
    fail(ErrorKind::Config, kModule, "unknown test kind '" + name + "'");
}

double variance_lambda_hat(std::span<const double> gene_counts_j, double lambda_hat,
                           std::span<const double> tau_row, std::span<const double> alphas,
                           bool bias_correct) {
    const std::size_t nj = gene_counts_j.size();
    if (nj == 0) {
        fail(ErrorKind::Shape, kModule, "variance_lambda_hat needs at least one replicate");
    }
    if (tau_row.size() != alphas.size() || alphas.empty()) {
        fail(ErrorKind::Shape, kModule, "tau_row and alphas must have the same length");
    }
    if (bias_correct && nj < 2) {
        fail(ErrorKind::InsufficientReplicates, kModule,
             "bias correction requires n_j >= 2, got n_j = " + std::to_string(nj));
    }
    if (lambda_hat < 0.0) {
        fail(ErrorKind::ParameterDomain, kModule, "lambda_hat must be non-negative");
    }
    double overdisp = 0.0; // posterior-weighted 1/alpha
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        overdisp += tau_row[k] / alphas[k];
    }
    const double n = static_cast<double>(nj);
    double var = lambda_hat * (1.0 + lambda_hat * overdisp) / n;
    if (bias_correct) {
        var *= n / (n - 1.0);
    }
    return var;
}

GeneVariance gene_variance(const CountMatrix& data, std::size_t gene,
                           std::span<const double> lambda_row, std::span<const double> tau_row,
                           std::span<const double> alphas, bool bias_correct) {
    if (gene >= data.n_genes() || lambda_row.size() != data.n_conditions()) {
        fail(ErrorKind::Shape, kModule, "gene_variance index or lambda row out of range");
    }
    GeneVariance out;
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        out.overdisp_mix += tau_row[k] / alphas[k];
    }
    const auto groups = data.samples_by_condition();
    const auto row = data.gene_row(gene);
    std::vector<double> counts_j;
    for (std::size_t j = 0; j < data.n_conditions(); ++j) {
        counts_j.clear();
        for (int s : groups[j]) counts_j.push_back(row[static_cast<std::size_t>(s)]);
        out.var_lambda_hat.push_back(
            variance_lambda_hat(counts_j, lambda_row[j], tau_row, alphas, bias_correct));
    }
    return out;
}

Statistic difference_test(double lam1, double lam2, double var1, double var2) {
    const double denom = var1 + var2;
    if (!(denom > 0.0)) {
        return {};
    }
    return {(lam1 - lam2) / std::sqrt(denom), true};
}

Statistic ratio_test(double lam1, double lam2, double var1, double var2) {
    if (!(lam2 > 0.0)) {
        return {};
    }
    const double l2sq = lam2 * lam2;
    const double denom = var1 / l2sq + lam1 * lam1 * var2 / (l2sq * l2sq);
    if (!(denom > 0.0)) {
        return {};
    }
    return {(lam1 / lam2 - 1.0) / std::sqrt(denom), true};
}

Statistic logratio_test(double y_sum1, double y_sum2, double lam1, double lam2, double var_sum1,
                        double var_sum2) {
    if (!(y_sum1 > 0.0) || !(y_sum2 > 0.0)) {
        return {};
    }
    const double denom = var_sum1 / (y_sum1 * y_sum1) + var_sum2 / (y_sum2 * y_sum2);
    if (!(denom > 0.0)) {
        return {};
    }
    return {(std::log(lam1) - std::log(lam2)) / std::sqrt(denom), true};
}

double two_sided_p(double statistic) {
    if (!std::isfinite(statistic)) {
        fail(ErrorKind::ParameterDomain, kModule, "test statistic must be finite");
    }
    return std::erfc(std::fabs(statistic) / kSqrt2);
}

std::vector<double> bh_adjust(const std::vector<double>& p_values) {
    const std::size_t m = p_values.size();
    for (double p : p_values) {
        if (!(p >= 0.0) || !(p <= 1.0)) {
            fail(ErrorKind::ParameterDomain, kModule,
                 "p-values must lie in [0,1], got " + std::to_string(p));
        }
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::vector<double> adjusted(m);
    double running_min = 1.0;
    for (std::size_t r = m; r > 0; --r) {
        const std::size_t idx = order[r - 1];
        const double q = p_values[idx] * static_cast<double>(m) / static_cast<double>(r);
        running_min = std::min(running_min, q);
        adjusted[idx] = running_min;
    }
    return adjusted;
}

std::vector<TestTable> run_tests(const FitResult& fit, const CountMatrix& data,
                                 const std::vector<TestKind>& kinds, double level,
                                 bool bias_correct) {
    data.validate();
    const std::size_t d = data.n_conditions();
    if (d != 2) {
        fail(ErrorKind::UnsupportedDesign, kModule,
             "differential tests require exactly 2 conditions, got " + std::to_string(d));
    }
    if (!(level > 0.0) || !(level < 1.0)) {
        fail(ErrorKind::Config, kModule, "level must lie in (0,1)");
    }
    const std::size_t p = data.n_genes();
    fit.params.validate(p, d);
    if (fit.tau.n_genes != p) {
        fail(ErrorKind::Shape, kModule, "fit responsibilities do not match the data");
    }

    const auto groups = data.samples_by_condition();
    const std::size_t n1 = groups[0].size();
    const std::size_t n2 = groups[1].size();

    std::vector<TestTable> tables;
    tables.reserve(kinds.size());
    for (TestKind kind : kinds) {
        tables.push_back({kind, level, std::vector<GeneTestResult>(p)});
    }

    for (std::size_t i = 0; i < p; ++i) {
        const auto row = data.gene_row(i);
        double y_sum1 = 0.0, y_sum2 = 0.0;
        for (int s : groups[0]) y_sum1 += row[static_cast<std::size_t>(s)];
        for (int s : groups[1]) y_sum2 += row[static_cast<std::size_t>(s)];
        const double lam1 = fit.params.lambda[i * 2];
        const double lam2 = fit.params.lambda[i * 2 + 1];
        const auto gv = gene_variance(data, i, fit.params.lambda_row(i, 2), fit.tau.row(i),
                                      fit.params.alphas, bias_correct);
        const double var1 = gv.var_lambda_hat[0];
        const double var2 = gv.var_lambda_hat[1];

        for (std::size_t t = 0; t < kinds.size(); ++t) {
            Statistic stat;
            switch (kinds[t]) {
                case TestKind::Difference:
                    stat = difference_test(lam1, lam2, var1, var2);
                    break;
                case TestKind::Ratio:
                    stat = ratio_test(lam1, lam2, var1, var2);
                    break;
                case TestKind::LogRatio:
                    stat = logratio_test(y_sum1, y_sum2, lam1, lam2,
                                         static_cast<double>(n1 * n1) * var1,
                                         static_cast<double>(n2 * n2) * var2);
                    break;
            }
            GeneTestResult& res = tables[t].rows[i];
            res.gene_id = data.gene_ids[i];
            res.kind = kinds[t];
            res.defined = stat.defined;
            if (stat.defined) {
                res.statistic = stat.value;
                res.p_value = two_sided_p(stat.value);
            }
        }
    }

    for (auto& table : tables) {
        std::vector<double> defined_p;
        std::vector<std::size_t> defined_idx;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            if (table.rows[i].defined) {
                defined_p.push_back(table.rows[i].p_value);
                defined_idx.push_back(i);
            }
        }
        const auto adjusted = bh_adjust(defined_p);
        for (std::size_t r = 0; r < defined_idx.size(); ++r) {
            table.rows[defined_idx[r]].p_adjusted = adjusted[r];
        }
    }
    return tables;
}

} // namespace nbmix
