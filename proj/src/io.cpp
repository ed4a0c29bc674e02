#include "nbmix/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "nbmix/errors.hpp"

namespace nbmix {

namespace {

constexpr const char* kModule = "cli";
constexpr const char* kVersion = "0.1.0";

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream stream(line);
    while (std::getline(stream, field, delim)) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == delim) {
        fields.emplace_back();
    }
    return fields;
}

std::string strip(const std::string& s) {
    std::size_t lo = 0;
    std::size_t hi = s.size();
    while (lo < hi && (s[lo] == ' ' || s[lo] == '\r' || s[lo] == '\t')) ++lo;
    while (hi > lo && (s[hi - 1] == ' ' || s[hi - 1] == '\r' || s[hi - 1] == '\t')) --hi;
    return s.substr(lo, hi - lo);
}

char delimiter_for(const std::string& path) {
    return path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? ',' : '\t';
}

double parse_count_cell(const std::string& raw, std::size_t line_no, std::size_t col_no) {
    const std::string cell = strip(raw);
    const auto coords = " at line " + std::to_string(line_no) + ", column " +
                        std::to_string(col_no);
    if (cell.empty()) {
        fail(ErrorKind::Parse, kModule, "empty count cell" + coords);
    }
    char* end = nullptr;
    const double value = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || !std::isfinite(value)) {
        fail(ErrorKind::Parse, kModule, "non-numeric count '" + cell + "'" + coords);
    }
    if (value < 0.0) {
        fail(ErrorKind::Parse, kModule, "negative count '" + cell + "'" + coords);
    }
    if (value != std::floor(value)) {
        fail(ErrorKind::Parse, kModule, "non-integer count '" + cell + "'" + coords);
    }
    return value;
}

void add_map_entry(ConditionMap& map, const std::string& sample, const std::string& condition,
                   const std::string& where) {
    if (sample.empty() || condition.empty()) {
        fail(ErrorKind::Config, kModule, "empty sample or condition name in " + where);
    }
    for (const auto& [s, c] : map.entries) {
        if (s == sample) {
            fail(ErrorKind::Config, kModule,
                 "sample '" + sample + "' assigned to a condition twice");
        }
    }
    map.entries.emplace_back(sample, condition);
}

} // namespace

std::string version_string() {
    return kVersion;
}

ConditionMap parse_condition_tokens(const std::vector<std::string>& tokens) {
    ConditionMap map;
    for (const auto& token : tokens) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::Config, kModule,
                 "condition assignment '" + token + "' is not of the form sample=condition");
        }
        add_map_entry(map, strip(token.substr(0, eq)), strip(token.substr(eq + 1)),
                      "condition flags");
    }
    return map;
}

ConditionMap load_condition_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, kModule, "cannot open condition file '" + path + "'");
    }
    const char delim = delimiter_for(path);
    ConditionMap map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string clean = strip(line);
        if (clean.empty() || clean[0] == '#') continue;
        const auto fields = split(clean, delim);
        if (fields.size() != 2) {
            fail(ErrorKind::Parse, kModule,
                 "condition file line " + std::to_string(line_no) + " needs 2 columns, got " +
                     std::to_string(fields.size()));
        }
        add_map_entry(map, strip(fields[0]), strip(fields[1]),
                      "condition file line " + std::to_string(line_no));
    }
    return map;
}

CountMatrix ingest(const std::string& path, const ConditionMap& map) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, kModule, "cannot open count file '" + path + "'");
    }
    if (map.entries.empty()) {
        fail(ErrorKind::Config, kModule, "no sample-to-condition assignments given");
    }
    const char delim = delimiter_for(path);

    std::string header;
    if (!std::getline(in, header)) {
        fail(ErrorKind::Parse, kModule, "count file '" + path + "' is empty");
    }
    auto header_fields = split(header, delim);
    for (auto& f : header_fields) f = strip(f);
    if (header_fields.size() < 2) {
        fail(ErrorKind::Parse, kModule, "header must contain a gene-id column and samples");
    }
    const std::vector<std::string> samples(header_fields.begin() + 1, header_fields.end());

    std::unordered_map<std::string, std::string> condition_of;
    for (const auto& [sample, condition] : map.entries) {
        condition_of.emplace(sample, condition);
    }

    CountMatrix data;
    std::unordered_set<std::string> seen_samples;
    for (const auto& sample : samples) {
        if (sample.empty() || !seen_samples.insert(sample).second) {
            fail(ErrorKind::Parse, kModule, "duplicate or empty sample name '" + sample + "'");
        }
        const auto it = condition_of.find(sample);
        if (it == condition_of.end()) {
            fail(ErrorKind::Config, kModule,
                 "sample '" + sample + "' has no condition assignment");
        }
        int index = -1;
        for (std::size_t j = 0; j < data.condition_labels.size(); ++j) {
            if (data.condition_labels[j] == it->second) {
                index = static_cast<int>(j);
                break;
            }
        }
        if (index < 0) {
            index = static_cast<int>(data.condition_labels.size());
            data.condition_labels.push_back(it->second);
        }
        data.condition_of_sample.push_back(index);
    }
    for (const auto& [sample, condition] : map.entries) {
        if (std::find(samples.begin(), samples.end(), sample) == samples.end()) {
            fail(ErrorKind::Config, kModule,
                 "condition map names sample '" + sample + "' which is not in the file");
        }
    }

    std::unordered_set<std::string> seen_genes;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (strip(line).empty()) continue;
        const auto fields = split(line, delim);
        if (fields.size() != samples.size() + 1) {
            fail(ErrorKind::Parse, kModule,
                 "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                     " columns, expected " + std::to_string(samples.size() + 1));
        }
        const std::string gene = strip(fields[0]);
        if (gene.empty()) {
            fail(ErrorKind::Parse, kModule, "empty gene id at line " + std::to_string(line_no));
        }
        if (!seen_genes.insert(gene).second) {
            fail(ErrorKind::Parse, kModule, "duplicate gene id '" + gene + "'");
        }
        data.gene_ids.push_back(gene);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            data.counts.push_back(parse_count_cell(fields[c], line_no, c + 1));
        }
    }
    data.validate();
    return data;
}

void write_counts(const CountMatrix& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        fail(ErrorKind::Io, kModule, "cannot write '" + path + "'");
    }
    const char delim = delimiter_for(path);
    out << "gene_id";
    for (std::size_t s = 0; s < data.n_samples(); ++s) {
        out << delim << "s" << (s + 1);
    }
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < data.n_genes(); ++i) {
        out << data.gene_ids[i];
        for (std::size_t s = 0; s < data.n_samples(); ++s) {
            const double y = data.at(i, s);
            if (y == std::floor(y) && std::fabs(y) < 1e15) {
                std::snprintf(buf, sizeof(buf), "%.0f", y);
            } else {
                std::snprintf(buf, sizeof(buf), "%.17g", y);
            }
            out << delim << buf;
        }
        out << "\n";
    }
}

std::pair<CountMatrix, std::vector<std::string>> filter_genes(const CountMatrix& data,
                                                              double min_mean_count) {
    data.validate();
    if (min_mean_count < 0.0) {
        fail(ErrorKind::Config, kModule, "min_mean_count must be >= 0");
    }
    CountMatrix kept;
    kept.condition_of_sample = data.condition_of_sample;
    kept.condition_labels = data.condition_labels;
    std::vector<std::string> dropped;
    const std::size_t n = data.n_samples();
    for (std::size_t i = 0; i < data.n_genes(); ++i) {
        const auto row = data.gene_row(i);
        double mean = 0.0;
        for (double y : row) mean += y;
        mean /= static_cast<double>(n);
        if (mean > min_mean_count) {
            kept.gene_ids.push_back(data.gene_ids[i]);
            kept.counts.insert(kept.counts.end(), row.begin(), row.end());
        } else {
            dropped.push_back(data.gene_ids[i]);
        }
    }
    return {std::move(kept), std::move(dropped)};
}

void add_pseudocount(CountMatrix& data, double pseudocount) {
    if (pseudocount < 0.0) {
        fail(ErrorKind::Config, kModule, "pseudocount must be >= 0");
    }
    for (double& y : data.counts) y += pseudocount;
}

std::string fmt_stat(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string fmt_pvalue(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6e", v);
    return buf;
}

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_results_tsv(const TestTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        fail(ErrorKind::Io, kModule, "cannot write '" + path + "'");
    }
    out << "gene_id\tstatistic\tp_value\tp_adjusted\tdefined\n";
    for (const auto& row : table.rows) {
        out << row.gene_id << '\t';
        if (row.defined) {
            out << fmt_stat(row.statistic) << '\t' << fmt_pvalue(row.p_value) << '\t'
                << fmt_pvalue(row.p_adjusted) << "\t1\n";
        } else {
            out << "NA\tNA\tNA\t0\n";
        }
    }
}

void write_criteria_tsv(const KSelection& sel, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        fail(ErrorKind::Io, kModule, "cannot write '" + path + "'");
    }
    out << "k\tloglik\taic\tbic\ticl_bic\tn_iter\tconverged\taic_best\tbic_best\ticl_bic_best"
           "\terror\n";
    for (const auto& row : sel.rows) {
        out << row.k << '\t';
        if (row.error.empty()) {
            out << fmt_real(row.loglik) << '\t' << fmt_real(row.aic) << '\t'
                << fmt_real(row.bic) << '\t' << fmt_real(row.icl_bic) << '\t' << row.n_iter
                << '\t' << (row.converged ? 1 : 0);
        } else {
            out << "NA\tNA\tNA\tNA\tNA\tNA";
        }
        out << '\t' << (sel.best_aic == row.k ? 1 : 0) << '\t' << (sel.best_bic == row.k ? 1 : 0)
            << '\t' << (sel.best_icl_bic == row.k ? 1 : 0) << '\t'
            << (row.error.empty() ? "" : row.error) << '\n';
    }
}

void write_fit_json(const FitResult& fit, const CountMatrix& data, const std::string& path) {
    nlohmann::json j;
    j["version"] = version_string();
    j["k"] = fit.params.n_components();
    j["n_genes"] = data.n_genes();
    j["n_samples"] = data.n_samples();
    j["condition_labels"] = data.condition_labels;
    j["converged"] = fit.converged;
    j["n_iter"] = fit.n_iter;
    j["empty_component_warning"] = fit.empty_component;
    j["loglik"] = fit.loglik();
    j["loglik_trace"] = fit.loglik_trace;
    j["aic"] = fit.aic;
    j["bic"] = fit.bic;
    j["icl_bic"] = fit.icl_bic;
    j["weights"] = fit.params.weights;
    j["alphas"] = fit.params.alphas;
    j["gene_ids"] = data.gene_ids;
    nlohmann::json lambda = nlohmann::json::array();
    const std::size_t d = data.n_conditions();
    for (std::size_t i = 0; i < data.n_genes(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t jx = 0; jx < d; ++jx) {
            row.push_back(fit.params.lambda[i * d + jx]);
        }
        lambda.push_back(std::move(row));
    }
    j["lambda"] = std::move(lambda);

    std::ofstream out(path);
    if (!out) {
        fail(ErrorKind::Io, kModule, "cannot write '" + path + "'");
    }
    out << j.dump(2) << "\n";
}

} // namespace nbmix
