#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nbmix/difftest.hpp"
#include "nbmix/em.hpp"
#include "nbmix/errors.hpp"
#include "nbmix/io.hpp"
#include "nbmix/parallel.hpp"
#include "nbmix/simlab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string input;
    std::vector<std::string> cond_tokens;
    std::string cond_file;
    int k = 3;
    std::string k_range = "1..6";
    std::string tests = "difference,ratio,logratio";
    double level = 0.05;
    std::uint64_t seed = 0;
    double min_mean_count = 1.0;
    double pseudocount = 0.0;
    bool no_bias_correct = false;
    int max_iter = 500;
    double tol = 1e-8;
    int restarts = 0;
    int threads = 0; // 0: NBMIX_THREADS env or 1
    std::string out = ".";
};

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("NBMIX_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

std::pair<int, int> parse_k_range(const std::string& text) {
    const auto pos = text.find("..");
    if (pos == std::string::npos) {
        nbmix::fail(nbmix::ErrorKind::Config, "cli",
                    "k-range must look like A..B, got '" + text + "'");
    }
    try {
        const int lo = std::stoi(text.substr(0, pos));
        const int hi = std::stoi(text.substr(pos + 2));
        return {lo, hi};
    } catch (const std::exception&) {
        nbmix::fail(nbmix::ErrorKind::Config, "cli", "cannot parse k-range '" + text + "'");
    }
}

std::vector<nbmix::TestKind> parse_tests(const std::string& text) {
    std::vector<nbmix::TestKind> kinds;
    std::string token;
    std::istringstream stream(text);
    while (std::getline(stream, token, ',')) {
        if (!token.empty()) kinds.push_back(nbmix::test_kind_from_string(token));
    }
    if (kinds.empty()) {
        nbmix::fail(nbmix::ErrorKind::Config, "cli", "no tests requested");
    }
    return kinds;
}

nbmix::ConditionMap resolve_condition_map(const CommonOpts& opts) {
    if (!opts.cond_file.empty()) {
        if (!opts.cond_tokens.empty()) {
            nbmix::fail(nbmix::ErrorKind::Config, "cli",
                        "give either --cond flags or --cond-file, not both");
        }
        return nbmix::load_condition_file(opts.cond_file);
    }
    return nbmix::parse_condition_tokens(opts.cond_tokens);
}

nbmix::FitConfig fit_config_from(const CommonOpts& opts) {
    nbmix::FitConfig config;
    config.max_iter = opts.max_iter;
    config.tol = opts.tol;
    config.seed = opts.seed;
    config.restarts = opts.restarts;
    return config;
}

json config_json(const CommonOpts& opts, const std::string& command) {
    json j;
    j["command"] = command;
    j["input_path"] = opts.input;
    json cond = json::array();
    for (const auto& token : opts.cond_tokens) cond.push_back(token);
    j["condition_map"] = cond;
    j["condition_file"] = opts.cond_file;
    j["k"] = opts.k;
    j["k_range"] = opts.k_range;
    j["tests"] = opts.tests;
    j["level"] = opts.level;
    j["seed"] = opts.seed;
    j["min_mean_count"] = opts.min_mean_count;
    j["pseudocount"] = opts.pseudocount;
    j["bias_correct"] = !opts.no_bias_correct;
    j["max_iter"] = opts.max_iter;
    j["tol"] = opts.tol;
    j["restarts"] = opts.restarts;
    j["threads"] = resolve_threads(opts.threads);
    j["output_dir"] = opts.out;
    return j;
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        nbmix::fail(nbmix::ErrorKind::Io, "cli", "cannot write '" + path.string() + "'");
    }
    out << j.dump(2) << "\n";
}

void write_manifest(const json& extra, const std::string& command, const fs::path& dir) {
    json manifest;
    manifest["version"] = nbmix::version_string();
    manifest["tool"] = "nbmix";
    manifest["command"] = command;
    for (auto it = extra.begin(); it != extra.end(); ++it) {
        manifest[it.key()] = it.value();
    }
    write_json(manifest, dir / "manifest.json");
}

nbmix::CountMatrix load_and_prepare(const CommonOpts& opts, json& manifest_extra) {
    auto data = nbmix::ingest(opts.input, resolve_condition_map(opts));
    if (opts.pseudocount > 0.0) {
        nbmix::add_pseudocount(data, opts.pseudocount);
    }
    auto [kept, dropped] = nbmix::filter_genes(data, opts.min_mean_count);
    manifest_extra["n_genes_input"] = data.n_genes();
    manifest_extra["n_genes_kept"] = kept.n_genes();
    manifest_extra["dropped_gene_ids"] = dropped;
    if (kept.n_genes() == 0) {
        nbmix::fail(nbmix::ErrorKind::Config, "cli",
                    "no genes pass the mean-count filter (threshold " +
                        std::to_string(opts.min_mean_count) + ")");
    }
    return kept;
}

void add_common_flags(CLI::App* cmd, CommonOpts& opts, bool needs_input) {
    if (needs_input) {
        cmd->add_option("--input", opts.input, "count matrix (TSV, or CSV with .csv suffix)")
            ->required();
        cmd->add_option("--cond", opts.cond_tokens,
                        "sample=condition assignment (repeatable)");
        cmd->add_option("--cond-file", opts.cond_file, "two-column sample/condition file");
        cmd->add_option("--min-mean-count", opts.min_mean_count,
                        "keep genes with mean count strictly above this");
        cmd->add_option("--pseudocount", opts.pseudocount,
                        "added to every cell before any other step");
    }
    cmd->add_option("--level", opts.level, "test level in (0,1)");
    cmd->add_option("--seed", opts.seed, "random seed");
    cmd->add_flag("--no-bias-correct", opts.no_bias_correct,
                  "disable the n_j/(n_j-1) variance correction");
    cmd->add_option("--max-iter", opts.max_iter, "EM iteration cap");
    cmd->add_option("--tol", opts.tol, "EM relative log-likelihood tolerance");
    cmd->add_option("--restarts", opts.restarts, "extra EM runs from jittered dispersions");
    cmd->add_option("--threads", opts.threads, "worker threads (0: NBMIX_THREADS or 1)");
    cmd->add_option("--out", opts.out, "output directory")->required();
}

int cmd_fit(const CommonOpts& opts) {
    const fs::path dir(opts.out);
    fs::create_directories(dir);
    write_json(config_json(opts, "fit"), dir / "config.json");

    json manifest_extra;
    const auto data = load_and_prepare(opts, manifest_extra);
    auto config = fit_config_from(opts);
    config.threads = resolve_threads(opts.threads);
    const auto fit = nbmix::fit(data, opts.k, config);
    nbmix::write_fit_json(fit, data, (dir / "fit.json").string());
    manifest_extra["converged"] = fit.converged;
    write_manifest(manifest_extra, "fit", dir);
    return 0;
}

int cmd_select_k(const CommonOpts& opts) {
    const fs::path dir(opts.out);
    fs::create_directories(dir);
    write_json(config_json(opts, "select-k"), dir / "config.json");

    json manifest_extra;
    const auto data = load_and_prepare(opts, manifest_extra);
    const auto [k_lo, k_hi] = parse_k_range(opts.k_range);
    auto config = fit_config_from(opts);
    config.threads = resolve_threads(opts.threads);
    const auto sel = nbmix::select_k(data, k_lo, k_hi, config);
    nbmix::write_criteria_tsv(sel, (dir / "criteria.tsv").string());
    manifest_extra["best_aic"] = sel.best_aic;
    manifest_extra["best_bic"] = sel.best_bic;
    manifest_extra["best_icl_bic"] = sel.best_icl_bic;
    write_manifest(manifest_extra, "select-k", dir);
    return 0;
}

int cmd_test(const CommonOpts& opts) {
    const fs::path dir(opts.out);
    fs::create_directories(dir);
    write_json(config_json(opts, "test"), dir / "config.json");

    json manifest_extra;
    const auto data = load_and_prepare(opts, manifest_extra);
    auto config = fit_config_from(opts);
    config.threads = resolve_threads(opts.threads);
    const auto fit = nbmix::fit(data, opts.k, config);
    nbmix::write_fit_json(fit, data, (dir / "fit.json").string());

    const auto kinds = parse_tests(opts.tests);
    const auto tables =
        nbmix::run_tests(fit, data, kinds, opts.level, !opts.no_bias_correct);
    json files = json::array();
    for (const auto& table : tables) {
        const std::string name = std::string("results_") + nbmix::to_string(table.kind) + ".tsv";
        nbmix::write_results_tsv(table, (dir / name).string());
        files.push_back(name);
    }
    manifest_extra["converged"] = fit.converged;
    manifest_extra["result_files"] = files;
    write_manifest(manifest_extra, "test", dir);
    return 0;
}

struct SimulateOpts {
    CommonOpts common;
    std::string mode = "errors"; // errors | variance
    std::size_t p = 300;
    double frac_de = 1.0 / 3.0;
    int n_per_condition = 5;
    int n_datasets = 100;
};

int cmd_simulate(const SimulateOpts& sim) {
    const CommonOpts& opts = sim.common;
    const fs::path dir(opts.out);
    fs::create_directories(dir);
    json config = config_json(opts, "simulate");
    config["mode"] = sim.mode;
    config["p"] = sim.p;
    config["frac_de"] = sim.frac_de;
    config["n_per_condition"] = sim.n_per_condition;
    config["n_datasets"] = sim.n_datasets;
    write_json(config, dir / "config.json");

    nbmix::SimDesign design;
    design.p = sim.p;
    design.frac_de = sim.frac_de;
    design.n_per_condition = sim.n_per_condition;
    design.seed = opts.seed;

    const int threads = resolve_threads(opts.threads);
    const auto fit_config = fit_config_from(opts);

    json manifest_extra;
    manifest_extra["design"] = {
        {"p", design.p},
        {"frac_de", design.frac_de},
        {"n_per_condition", design.n_per_condition},
        {"lambda_range", {design.lambda_lo, design.lambda_hi}},
        {"lfc_mean", design.lfc_mean},
        {"lfc_sd", design.lfc_sd},
        {"alpha_range", {design.alpha_lo, design.alpha_hi}},
        {"master_seed", design.seed},
        {"dataset_seeds", std::string("master_seed + dataset_index")},
    };

    std::ofstream metrics(dir / "metrics.tsv");
    if (!metrics) {
        nbmix::fail(nbmix::ErrorKind::Io, "cli", "cannot write metrics.tsv");
    }

    if (sim.mode == "variance") {
        const auto [k_lo, k_hi] = parse_k_range(opts.k_range);
        std::vector<int> k_values;
        for (int k = k_lo; k <= k_hi; ++k) k_values.push_back(k);
        const auto rows = nbmix::variance_accuracy_curve(design, k_values, sim.n_datasets,
                                                         fit_config, threads);
        metrics << "k\tmean_rel_err\tse\tn_datasets\n";
        for (const auto& row : rows) {
            metrics << row.k << '\t' << nbmix::fmt_stat(row.mean_rel_err) << '\t'
                    << nbmix::fmt_stat(row.se) << '\t' << row.n_datasets << '\n';
        }
    } else if (sim.mode == "errors") {
        const auto kinds = parse_tests(opts.tests);
        const auto campaign =
            nbmix::run_error_campaign(design, sim.n_datasets, opts.k, kinds, opts.level,
                                      !opts.no_bias_correct, fit_config, threads);
        manifest_extra["n_fit_failures"] = campaign.n_fit_failures;
        const std::vector<double> levels = {0.05, 0.01, 0.001};
        metrics << "test\tlevel\ttype1_mean\ttype1_se\ttype2_mean\ttype2_se\tks_null"
                   "\tn_null_genes\tn_de_genes\n";
        for (std::size_t t = 0; t < kinds.size(); ++t) {
            const auto rows =
                nbmix::error_rates(campaign.tables_by_kind[t], campaign.is_de, levels);
            std::vector<double> grid;
            for (int g = 1; g <= 100; ++g) grid.push_back(g / 100.0);
            const auto ecdf =
                nbmix::null_pvalue_ecdf(campaign.tables_by_kind[t], campaign.is_de, grid);
            for (const auto& row : rows) {
                metrics << nbmix::to_string(kinds[t]) << '\t' << nbmix::fmt_stat(row.level)
                        << '\t' << nbmix::fmt_stat(row.type1_mean) << '\t'
                        << nbmix::fmt_stat(row.type1_se) << '\t'
                        << nbmix::fmt_stat(row.type2_mean) << '\t'
                        << nbmix::fmt_stat(row.type2_se) << '\t' << nbmix::fmt_stat(ecdf.ks)
                        << '\t' << row.n_null_genes << '\t' << row.n_de_genes << '\n';
            }
        }
    } else {
        nbmix::fail(nbmix::ErrorKind::Config, "cli",
                    "unknown simulate mode '" + sim.mode + "' (use errors or variance)");
    }
    write_manifest(manifest_extra, "simulate", dir);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"NB mixture fitting and differential expression testing"};
    app.require_subcommand(1);

    CommonOpts fit_opts, select_opts, test_opts;
    SimulateOpts sim_opts;

    auto* fit_cmd = app.add_subcommand("fit", "fit the mixture for a fixed K");
    add_common_flags(fit_cmd, fit_opts, true);
    fit_cmd->add_option("--k", fit_opts.k, "number of mixture components")->required();

    auto* select_cmd = app.add_subcommand("select-k", "fit a K range and rank criteria");
    add_common_flags(select_cmd, select_opts, true);
    select_cmd->add_option("--k-range", select_opts.k_range, "A..B inclusive")->required();

    auto* test_cmd = app.add_subcommand("test", "fit and run differential tests");
    add_common_flags(test_cmd, test_opts, true);
    test_cmd->add_option("--k", test_opts.k, "number of mixture components")->required();
    test_cmd->add_option("--tests", test_opts.tests, "comma list of difference,ratio,logratio");

    auto* sim_cmd = app.add_subcommand("simulate", "synthetic accuracy/error-control runs");
    add_common_flags(sim_cmd, sim_opts.common, false);
    sim_cmd->add_option("--mode", sim_opts.mode, "errors | variance");
    sim_cmd->add_option("--p", sim_opts.p, "genes per dataset");
    sim_cmd->add_option("--frac-de", sim_opts.frac_de, "fraction of DE genes");
    sim_cmd->add_option("--nj", sim_opts.n_per_condition, "replicates per condition");
    sim_cmd->add_option("--datasets", sim_opts.n_datasets, "number of datasets");
    sim_cmd->add_option("--k", sim_opts.common.k, "mixture components for each fit");
    sim_cmd->add_option("--k-range", sim_opts.common.k_range, "K values for variance mode");
    sim_cmd->add_option("--tests", sim_opts.common.tests,
                        "comma list of difference,ratio,logratio");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fit_cmd->parsed()) return cmd_fit(fit_opts);
        if (select_cmd->parsed()) return cmd_select_k(select_opts);
        if (test_cmd->parsed()) return cmd_test(test_opts);
        if (sim_cmd->parsed()) return cmd_simulate(sim_opts);
    } catch (const nbmix::Error& e) {
        json err;
        err["error"] = {{"kind", nbmix::to_string(e.kind())},
                        {"module", e.module()},
                        {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json err;
        err["error"] = {{"kind", "internal"}, {"module", "cli"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
