#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace nbmix {

// Gene-level read counts: p genes x n samples, each sample assigned to one
// of d conditions. Counts are stored as doubles so a fractional pseudocount
// can be folded in, but ingest validates integer cells.
struct CountMatrix {
    std::vector<double> counts;            // row-major, p x n
    std::vector<int> condition_of_sample;  // length n, values in [0, d)
    std::vector<std::string> gene_ids;     // length p
    std::vector<std::string> condition_labels; // length d

    std::size_t n_genes() const { return gene_ids.size(); }
    std::size_t n_samples() const { return condition_of_sample.size(); }
    std::size_t n_conditions() const { return condition_labels.size(); }

    std::span<const double> gene_row(std::size_t i) const {
        return {counts.data() + i * n_samples(), n_samples()};
    }
    double at(std::size_t gene, std::size_t sample) const {
        return counts[gene * n_samples() + sample];
    }

    // replicate count n_j per condition
    std::vector<int> condition_sizes() const;

    // sample indices grouped by condition, each group in sample order
    std::vector<std::vector<int>> samples_by_condition() const;

    // throws a shape error on inconsistent dimensions, an empty condition,
    // or a negative/non-finite count
    void validate() const;
};

} // namespace nbmix
