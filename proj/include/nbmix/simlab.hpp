#pragma once

#include <cstdint>
#include <vector>

#include "nbmix/count_matrix.hpp"
#include "nbmix/difftest.hpp"
#include "nbmix/em.hpp"

namespace nbmix {

// Two-condition synthetic design. DE genes draw lambda_1 uniformly and set
// lambda_2 = lambda_1 * exp(-phi) with phi ~ Normal(lfc_mean, lfc_sd); null
// genes share one uniform mean. Dispersions are uniform per gene; counts are
// NB via the Gamma-Poisson composition.
struct SimDesign {
    std::size_t p = 300;
    double frac_de = 1.0 / 3.0;
    int n_per_condition = 5;
    double lambda_lo = 0.0;
    double lambda_hi = 250.0;
    double lfc_mean = 0.5;
    double lfc_sd = 0.125;
    double alpha_lo = 0.5;
    double alpha_hi = 600.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SimDataset {
    CountMatrix data;
    std::vector<std::uint8_t> is_de;   // p
    std::vector<double> true_lambda;   // p x 2
    std::vector<double> true_alpha;    // p
    std::vector<double> true_variance; // p x 2, Var(lambda_hat) under the truth
};

// Deterministic for a given design (the first round(frac_de * p) genes are
// the DE ones; one RNG stream, gene-major draw order).
SimDataset generate_dataset(const SimDesign& design);

struct VarianceCurveRow {
    int k = 0;
    double mean_rel_err = 0.0; // mean over datasets of mean |est-true|/true
    double se = 0.0;           // sd across datasets / sqrt(H)
    int n_datasets = 0;        // datasets whose fit succeeded
};

// Mean relative error of the bias-corrected variance estimates against the
// generator truth, per mixture size K. Dataset h uses seed design.seed + h.
std::vector<VarianceCurveRow> variance_accuracy_curve(const SimDesign& design,
                                                      const std::vector<int>& k_values,
                                                      int n_datasets,
                                                      const FitConfig& fit_config = {},
                                                      int threads = 1);

struct ErrorRateRow {
    double level = 0.0;
    double type1_mean = 0.0;
    double type1_se = 0.0; // spread of the per-gene rejection rates (sd across genes)
    double type2_mean = 0.0;
    double type2_se = 0.0;
    std::size_t n_null_genes = 0; // genes entering the type-I aggregate
    std::size_t n_de_genes = 0;
};

// Per-gene rejection rates across datasets, aggregated over genes. `tables`
// holds one TestTable per dataset, all for the same test kind and the same
// truth layout. Genes undefined in a dataset are excluded from that
// dataset's denominator; genes defined nowhere are dropped (and counted out).
std::vector<ErrorRateRow> error_rates(const std::vector<TestTable>& tables,
                                      const std::vector<std::uint8_t>& is_de,
                                      const std::vector<double>& levels);

struct EcdfResult {
    std::vector<double> grid;
    std::vector<double> ecdf;
    double ks = 0.0; // exact Kolmogorov distance of the pooled sample from U(0,1)
    std::size_t n_pvalues = 0;
};

// Pooled raw null p-values across datasets for one test kind.
EcdfResult null_pvalue_ecdf(const std::vector<TestTable>& tables,
                            const std::vector<std::uint8_t>& is_de,
                            const std::vector<double>& grid);

// One full error-control campaign: H datasets, one fit each, all requested
// tests. Datasets run in parallel; aggregation is sequential in dataset
// order, so results do not depend on the thread count.
struct Campaign {
    std::vector<std::uint8_t> is_de;
    std::vector<std::vector<TestTable>> tables_by_kind; // [kind][dataset]
    std::vector<TestKind> kinds;
    int n_fit_failures = 0;
};

Campaign run_error_campaign(const SimDesign& design, int n_datasets, int k,
                            const std::vector<TestKind>& kinds, double level,
                            bool bias_correct = true, const FitConfig& fit_config = {},
                            int threads = 1);

// mean and sd/sqrt(n) of a sample; shared by the metric aggregations
struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};
MeanSe mean_se(const std::vector<double>& values);

} // namespace nbmix
