#include "nbmix/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nbmix/errors.hpp"
#include "nbmix/parallel.hpp"
#include "nbmix/rng.hpp"

namespace nbmix {

namespace {

constexpr const char* kModule = "simlab";

std::string padded_gene_id(std::size_t index, std::size_t total) {
    std::size_t width = 1;
    for (std::size_t v = total; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index + 1);
    return "g" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

double sample_sd(const std::vector<double>& values, double mean) {
    if (values.size() < 2) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

} // namespace

MeanSe mean_se(const std::vector<double>& values) {
    MeanSe out;
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    out.se = sample_sd(values, out.mean) / std::sqrt(static_cast<double>(values.size()));
    return out;
}

void SimDesign::validate() const {
    if (p == 0 || n_per_condition < 1) {
        fail(ErrorKind::Config, kModule, "design needs p >= 1 and n_per_condition >= 1");
    }
    if (frac_de < 0.0 || frac_de > 1.0) {
        fail(ErrorKind::Config, kModule, "frac_de must lie in [0,1]");
    }
    if (!(lambda_hi > lambda_lo) || lambda_lo < 0.0 || !(alpha_hi > alpha_lo) ||
        !(alpha_lo > 0.0) || !(lfc_sd >= 0.0)) {
        fail(ErrorKind::Config, kModule, "invalid design ranges");
    }
}

SimDataset generate_dataset(const SimDesign& design) {
    design.validate();
    const std::size_t p = design.p;
    const std::size_t nj = static_cast<std::size_t>(design.n_per_condition);
    const std::size_t n = 2 * nj;
    const std::size_t n_de =
        static_cast<std::size_t>(std::lround(design.frac_de * static_cast<double>(p)));

    SimDataset out;
    out.data.counts.assign(p * n, 0.0);
    out.data.condition_of_sample.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        out.data.condition_of_sample[s] = s < nj ? 0 : 1;
    }
    out.data.condition_labels = {"cond1", "cond2"};
    out.data.gene_ids.resize(p);
    out.is_de.assign(p, 0);
    out.true_lambda.assign(p * 2, 0.0);
    out.true_alpha.assign(p, 0.0);
    out.true_variance.assign(p * 2, 0.0);

    Rng rng(design.seed);
    for (std::size_t i = 0; i < p; ++i) {
        out.data.gene_ids[i] = padded_gene_id(i, p);
        const bool de = i < n_de;
        out.is_de[i] = de ? 1 : 0;
        const double lambda1 = rng.uniform(design.lambda_lo, design.lambda_hi);
        double lambda2 = lambda1;
        if (de) {
            const double phi = rng.normal(design.lfc_mean, design.lfc_sd);
            lambda2 = lambda1 * std::exp(-phi);
        }
        const double alpha = rng.uniform(design.alpha_lo, design.alpha_hi);
        out.true_lambda[i * 2] = lambda1;
        out.true_lambda[i * 2 + 1] = lambda2;
        out.true_alpha[i] = alpha;
        for (int j = 0; j < 2; ++j) {
            const double lam = j == 0 ? lambda1 : lambda2;
            out.true_variance[i * 2 + static_cast<std::size_t>(j)] =
                lam * (1.0 + lam / alpha) / static_cast<double>(nj);
            for (std::size_t r = 0; r < nj; ++r) {
                const std::size_t s = static_cast<std::size_t>(j) * nj + r;
                out.data.counts[i * n + s] =
                    static_cast<double>(rng.negative_binomial(lam, alpha));
            }
        }
    }
    return out;
}

std::vector<VarianceCurveRow> variance_accuracy_curve(const SimDesign& design,
                                                      const std::vector<int>& k_values,
                                                      int n_datasets,
                                                      const FitConfig& fit_config, int threads) {
    design.validate();
    if (n_datasets < 1 || k_values.empty()) {
        fail(ErrorKind::Config, kModule, "need at least one dataset and one K");
    }
    const std::size_t h_count = static_cast<std::size_t>(n_datasets);
    // per_dataset_err[h][ki] = mean relative error, NaN when the fit failed
    std::vector<std::vector<double>> per_dataset_err(h_count,
                                                     std::vector<double>(k_values.size()));

    parallel_for(0, h_count, threads, [&](std::size_t h) {
        SimDesign local = design;
        local.seed = design.seed + h;
        const SimDataset ds = generate_dataset(local);
        const auto groups = ds.data.samples_by_condition();
        const std::size_t p = ds.data.n_genes();
        std::vector<double> counts_j;
        for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
            double err = std::numeric_limits<double>::quiet_NaN();
            try {
                const FitResult res = fit(ds.data, k_values[ki], fit_config);
                double acc = 0.0;
                for (std::size_t i = 0; i < p; ++i) {
                    for (std::size_t j = 0; j < 2; ++j) {
                        counts_j.clear();
                        for (int s : groups[j]) {
                            counts_j.push_back(ds.data.at(i, static_cast<std::size_t>(s)));
                        }
                        const double est = variance_lambda_hat(
                            counts_j, res.params.lambda[i * 2 + j], res.tau.row(i),
                            res.params.alphas, true);
                        const double truth = ds.true_variance[i * 2 + j];
                        acc += std::fabs(est - truth) / truth;
                    }
                }
                err = acc / static_cast<double>(2 * p);
            } catch (const Error&) {
                // fit failure recorded as a missing dataset for this K
            }
            per_dataset_err[h][ki] = err;
        }
    });

    std::vector<VarianceCurveRow> rows;
    rows.reserve(k_values.size());
    for (std::size_t ki = 0; ki < k_values.size(); ++ki) {
        std::vector<double> errs;
        for (std::size_t h = 0; h < h_count; ++h) {
            if (std::isfinite(per_dataset_err[h][ki])) {
                errs.push_back(per_dataset_err[h][ki]);
            }
        }
        const MeanSe ms = mean_se(errs);
        rows.push_back({k_values[ki], ms.mean, ms.se, static_cast<int>(errs.size())});
    }
    return rows;
}

std::vector<ErrorRateRow> error_rates(const std::vector<TestTable>& tables,
                                      const std::vector<std::uint8_t>& is_de,
                                      const std::vector<double>& levels) {
    if (tables.empty()) {
        fail(ErrorKind::Config, kModule, "error_rates needs at least one dataset table");
    }
    const std::size_t p = is_de.size();
    for (const auto& table : tables) {
        if (table.rows.size() != p) {
            fail(ErrorKind::Shape, kModule, "test table does not match the truth vector");
        }
    }
    std::vector<ErrorRateRow> rows;
    rows.reserve(levels.size());
    for (double level : levels) {
        ErrorRateRow row;
        row.level = level;
        std::vector<double> null_rates, de_rates;
        for (std::size_t i = 0; i < p; ++i) {
            std::size_t defined = 0, rejected = 0;
            for (const auto& table : tables) {
                if (!table.rows[i].defined) continue;
                ++defined;
                if (table.rows[i].p_value < level) ++rejected;
            }
            if (defined == 0) continue; // never testable, counted out
            const double reject_rate =
                static_cast<double>(rejected) / static_cast<double>(defined);
            if (is_de[i]) {
                de_rates.push_back(1.0 - reject_rate); // acceptance of a false null
            } else {
                null_rates.push_back(reject_rate);
            }
        }
        const MeanSe t1 = mean_se(null_rates);
        const MeanSe t2 = mean_se(de_rates);
        row.type1_mean = t1.mean;
        row.type1_se = sample_sd(null_rates, t1.mean);
        row.type2_mean = t2.mean;
        row.type2_se = sample_sd(de_rates, t2.mean);
        row.n_null_genes = null_rates.size();
        row.n_de_genes = de_rates.size();
        rows.push_back(row);
    }
    return rows;
}

EcdfResult null_pvalue_ecdf(const std::vector<TestTable>& tables,
                            const std::vector<std::uint8_t>& is_de,
                            const std::vector<double>& grid) {
    const std::size_t p = is_de.size();
    std::vector<double> pooled;
    for (const auto& table : tables) {
        if (table.rows.size() != p) {
            fail(ErrorKind::Shape, kModule, "test table does not match the truth vector");
        }
        for (std::size_t i = 0; i < p; ++i) {
            if (!is_de[i] && table.rows[i].defined) {
                pooled.push_back(table.rows[i].p_value);
            }
        }
    }
    std::sort(pooled.begin(), pooled.end());

    EcdfResult out;
    out.grid = grid;
    out.n_pvalues = pooled.size();
    out.ecdf.reserve(grid.size());
    for (double g : grid) {
        const auto it = std::upper_bound(pooled.begin(), pooled.end(), g);
        out.ecdf.push_back(pooled.empty()
                               ? 0.0
                               : static_cast<double>(it - pooled.begin()) /
                                     static_cast<double>(pooled.size()));
    }
    const double n = static_cast<double>(pooled.size());
    for (std::size_t r = 0; r < pooled.size(); ++r) {
        const double hi = static_cast<double>(r + 1) / n - pooled[r];
        const double lo = pooled[r] - static_cast<double>(r) / n;
        out.ks = std::max({out.ks, hi, lo});
    }
    return out;
}

Campaign run_error_campaign(const SimDesign& design, int n_datasets, int k,
                            const std::vector<TestKind>& kinds, double level, bool bias_correct,
                            const FitConfig& fit_config, int threads) {
    design.validate();
    if (n_datasets < 1 || kinds.empty()) {
        fail(ErrorKind::Config, kModule, "campaign needs datasets and at least one test kind");
    }
    const std::size_t h_count = static_cast<std::size_t>(n_datasets);
    std::vector<std::vector<TestTable>> per_dataset(h_count);
    std::vector<std::uint8_t> failed(h_count, 0);

    parallel_for(0, h_count, threads, [&](std::size_t h) {
        SimDesign local = design;
        local.seed = design.seed + h;
        const SimDataset ds = generate_dataset(local);
        try {
            const FitResult res = fit(ds.data, k, fit_config);
            per_dataset[h] = run_tests(res, ds.data, kinds, level, bias_correct);
        } catch (const Error&) {
            failed[h] = 1;
        }
    });

    Campaign campaign;
    campaign.kinds = kinds;
    {
        SimDesign local = design;
        const SimDataset ds = generate_dataset(local);
        campaign.is_de = ds.is_de;
    }
    campaign.tables_by_kind.resize(kinds.size());
    for (std::size_t h = 0; h < h_count; ++h) {
        if (failed[h]) {
            ++campaign.n_fit_failures;
            continue;
        }
        for (std::size_t t = 0; t < kinds.size(); ++t) {
            campaign.tables_by_kind[t].push_back(std::move(per_dataset[h][t]));
        }
    }
    return campaign;
}

} // namespace nbmix
