#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nbmix/count_matrix.hpp"
#include "nbmix/difftest.hpp"
#include "nbmix/em.hpp"
#include "nbmix/simlab.hpp"

namespace nbmix {

// sample -> condition assignments, in the order given; condition indices are
// assigned by first appearance of each label
struct ConditionMap {
    std::vector<std::pair<std::string, std::string>> entries;
};

// parses repeated "sample=condition" tokens
ConditionMap parse_condition_tokens(const std::vector<std::string>& tokens);
// two-column file (sample <tab-or-comma> condition), '#' comments allowed
ConditionMap load_condition_file(const std::string& path);

// Reads a TSV (or CSV for .csv paths) with a header row of sample names and
// gene ids in the first column. Cells must be non-negative integers; errors
// carry 1-based line/column coordinates.
CountMatrix ingest(const std::string& path, const ConditionMap& map);

void write_counts(const CountMatrix& data, const std::string& path);

// keeps genes whose overall mean count is strictly greater than the
// threshold; returns the kept matrix and the dropped gene ids
std::pair<CountMatrix, std::vector<std::string>> filter_genes(const CountMatrix& data,
                                                              double min_mean_count);

void add_pseudocount(CountMatrix& data, double pseudocount);

// fixed output formats, shared by the CLI and the golden tests:
// statistics %.6g, p-values %.6e
std::string fmt_stat(double v);
std::string fmt_pvalue(double v);
std::string fmt_real(double v); // %.10g, for likelihoods and criteria

void write_results_tsv(const TestTable& table, const std::string& path);
void write_criteria_tsv(const KSelection& sel, const std::string& path);
void write_fit_json(const FitResult& fit, const CountMatrix& data, const std::string& path);

std::string version_string();

} // namespace nbmix
