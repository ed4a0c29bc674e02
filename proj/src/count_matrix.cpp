#include "nbmix/count_matrix.hpp"

#include <cmath>
#include <string>

#include "nbmix/errors.hpp"

namespace nbmix {

namespace {
constexpr const char* kModule = "em-engine";
}

std::vector<int> CountMatrix::condition_sizes() const {
    std::vector<int> sizes(n_conditions(), 0);
    for (int c : condition_of_sample) {
        ++sizes[static_cast<std::size_t>(c)];
    }
    return sizes;
}

std::vector<std::vector<int>> CountMatrix::samples_by_condition() const {
    std::vector<std::vector<int>> groups(n_conditions());
    for (std::size_t s = 0; s < condition_of_sample.size(); ++s) {
        groups[static_cast<std::size_t>(condition_of_sample[s])].push_back(static_cast<int>(s));
    }
    return groups;
}

void CountMatrix::validate() const {
    const std::size_t p = n_genes();
    const std::size_t n = n_samples();
    const std::size_t d = n_conditions();
    if (d == 0 || n == 0 || p == 0) {
        fail(ErrorKind::Shape, kModule, "count matrix must have at least one gene, sample and condition");
    }
    if (counts.size() != p * n) {
        fail(ErrorKind::Shape, kModule,
             "counts has " + std::to_string(counts.size()) + " cells, expected " +
                 std::to_string(p * n));
    }
    for (int c : condition_of_sample) {
        if (c < 0 || static_cast<std::size_t>(c) >= d) {
            fail(ErrorKind::Shape, kModule, "sample condition index out of range");
        }
    }
    const auto sizes = condition_sizes();
    for (std::size_t j = 0; j < d; ++j) {
        if (sizes[j] < 1) {
            fail(ErrorKind::Shape, kModule,
                 "condition '" + condition_labels[j] + "' has no samples");
        }
    }
    for (double y : counts) {
        if (!(y >= 0.0) || !std::isfinite(y)) {
            fail(ErrorKind::Shape, kModule, "counts must be finite and non-negative");
        }
    }
}

} // namespace nbmix
