#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nbmix/errors.hpp"
#include "nbmix/io.hpp"
#include "nbmix/rng.hpp"

using namespace nbmix;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("nbmix_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, const fs::path& stderr_to = {}) {
    std::string cmd = std::string(NBMIX_CLI_PATH) + " " + args;
    if (!stderr_to.empty()) {
        cmd += " 2>" + stderr_to.string();
    } else {
        cmd += " 2>/dev/null";
    }
    cmd += " >/dev/null";
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

ConditionMap toy_map() {
    return parse_condition_tokens({"s1=a", "s2=a", "s3=b", "s4=b"});
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("ingest: well-formed matrix") {
    const auto dir = scratch_dir("ingest_ok");
    write_file(dir / "counts.tsv",
               "gene\ts1\ts2\ts3\ts4\n"
               "gA\t1\t2\t3\t4\n"
               "gB\t0\t0\t7\t9\n");
    const auto data = ingest((dir / "counts.tsv").string(), toy_map());
    CHECK(data.n_genes() == 2);
    CHECK(data.n_samples() == 4);
    CHECK(data.n_conditions() == 2);
    CHECK(data.condition_labels[0] == "a");
    CHECK(data.at(1, 2) == 7.0);
    CHECK(data.condition_of_sample == std::vector<int>{0, 0, 1, 1});
}

TEST_CASE("ingest: csv delimiter by extension") {
    const auto dir = scratch_dir("ingest_csv");
    write_file(dir / "counts.csv", "gene,s1,s2,s3,s4\ngA,1,2,3,4\n");
    const auto data = ingest((dir / "counts.csv").string(), toy_map());
    CHECK(data.n_genes() == 1);
    CHECK(data.at(0, 3) == 4.0);
}

TEST_CASE("ingest: malformed cells name their coordinates") {
    const auto dir = scratch_dir("ingest_bad");
    write_file(dir / "neg.tsv", "gene\ts1\ts2\ts3\ts4\ngA\t1\t-2\t3\t4\n");
    try {
        ingest((dir / "neg.tsv").string(), toy_map());
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        const std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("column 3") != std::string::npos);
    }

    write_file(dir / "frac.tsv", "gene\ts1\ts2\ts3\ts4\ngA\t1\t2.5\t3\t4\n");
    CHECK_THROWS_AS(ingest((dir / "frac.tsv").string(), toy_map()), Error);
    write_file(dir / "text.tsv", "gene\ts1\ts2\ts3\ts4\ngA\t1\tx\t3\t4\n");
    CHECK_THROWS_AS(ingest((dir / "text.tsv").string(), toy_map()), Error);
}

TEST_CASE("ingest: duplicate genes and unmatched samples") {
    const auto dir = scratch_dir("ingest_dup");
    write_file(dir / "dup.tsv", "gene\ts1\ts2\ts3\ts4\ngA\t1\t2\t3\t4\ngA\t1\t2\t3\t4\n");
    CHECK_THROWS_AS(ingest((dir / "dup.tsv").string(), toy_map()), Error);

    write_file(dir / "ok.tsv", "gene\ts1\ts2\ts3\ts9\ngA\t1\t2\t3\t4\n");
    try {
        ingest((dir / "ok.tsv").string(), toy_map());
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        CHECK(std::string(e.what()).find("s9") != std::string::npos);
    }
}

TEST_CASE("condition maps: flags, file, duplicates") {
    const auto map = parse_condition_tokens({"x=treated", "y=control"});
    CHECK(map.entries.size() == 2);
    CHECK_THROWS_AS(parse_condition_tokens({"novalue"}), Error);
    CHECK_THROWS_AS(parse_condition_tokens({"x=a", "x=b"}), Error);

    const auto dir = scratch_dir("cond_file");
    write_file(dir / "map.tsv", "# comment\nx\ttreated\ny\tcontrol\n");
    const auto from_file = load_condition_file((dir / "map.tsv").string());
    CHECK(from_file.entries == map.entries);
}

TEST_CASE("round trip: write then ingest is the identity") {
    Rng rng(2718);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t p = 1 + static_cast<std::size_t>(rng.uniform(0.0, 20.0));
        const std::size_t n1 = 1 + static_cast<std::size_t>(rng.uniform(0.0, 4.0));
        const std::size_t n2 = 1 + static_cast<std::size_t>(rng.uniform(0.0, 4.0));
        CountMatrix data;
        data.condition_labels = {"t", "c"};
        for (std::size_t s = 0; s < n1 + n2; ++s) {
            data.condition_of_sample.push_back(s < n1 ? 0 : 1);
        }
        for (std::size_t i = 0; i < p; ++i) {
            data.gene_ids.push_back("gene_" + std::to_string(i));
            for (std::size_t s = 0; s < n1 + n2; ++s) {
                data.counts.push_back(std::floor(rng.uniform(0.0, 500.0)));
            }
        }
        const auto dir = scratch_dir("roundtrip");
        write_counts(data, (dir / "m.tsv").string());
        ConditionMap map;
        for (std::size_t s = 0; s < n1 + n2; ++s) {
            map.entries.emplace_back("s" + std::to_string(s + 1), s < n1 ? "t" : "c");
        }
        const auto back = ingest((dir / "m.tsv").string(), map);
        CHECK(back.counts == data.counts);
        CHECK(back.gene_ids == data.gene_ids);
        CHECK(back.condition_of_sample == data.condition_of_sample);
        CHECK(back.condition_labels == data.condition_labels);
    }
}

TEST_CASE("filter_genes: strict inequality") {
    CountMatrix data;
    data.condition_labels = {"a", "b"};
    data.condition_of_sample = {0, 0, 1, 1};
    data.gene_ids = {"zero", "unit", "big"};
    data.counts = {0, 0, 0, 0, 1, 1, 1, 1, 5, 5, 5, 5};
    const auto [at_zero, dropped_zero] = filter_genes(data, 0.0);
    CHECK(at_zero.n_genes() == 2); // all-zero gene dropped: mean 0 is not > 0
    CHECK(dropped_zero == std::vector<std::string>{"zero"});
    const auto [at_one, dropped_one] = filter_genes(data, 1.0);
    CHECK(at_one.n_genes() == 1); // mean exactly 1 is not > 1
    CHECK(at_one.gene_ids[0] == "big");
    CHECK(dropped_one == std::vector<std::string>{"zero", "unit"});
}

TEST_CASE("add_pseudocount shifts every cell") {
    CountMatrix data;
    data.condition_labels = {"a"};
    data.condition_of_sample = {0};
    data.gene_ids = {"g"};
    data.counts = {3.0};
    add_pseudocount(data, 0.5);
    CHECK(data.counts[0] == 3.5);
    CHECK_THROWS_AS(add_pseudocount(data, -1.0), Error);
}

TEST_CASE("fixed output formats") {
    CHECK(fmt_stat(0.0) == "0");
    CHECK(fmt_stat(-7.9264623) == "-7.92646");
    CHECK(fmt_stat(1234567.0) == "1.23457e+06");
    CHECK(fmt_pvalue(0.05) == "5.000000e-02");
    CHECK(fmt_pvalue(1.0) == "1.000000e+00");
    CHECK(fmt_pvalue(2.254891e-15) == "2.254891e-15");
}

TEST_CASE("cli: golden fixture, reproducibility, config echo") {
    const fs::path fixtures(NBMIX_FIXTURE_DIR);
    const auto out1 = scratch_dir("cli_run1");
    const auto out2 = scratch_dir("cli_run2");
    const std::string base_args = "test --input " + (fixtures / "toy5.tsv").string() +
                                  " --cond-file " + (fixtures / "toy5.conditions.tsv").string() +
                                  " --k 2 --seed 0 --level 0.05";
    REQUIRE(run_cli(base_args + " --out " + out1.string()) == 0);
    REQUIRE(run_cli(base_args + " --out " + out2.string()) == 0);

    for (const char* name :
         {"results_difference.tsv", "results_ratio.tsv", "results_logratio.tsv"}) {
        const std::string got = read_file(out1 / name);
        CHECK(got == read_file(fixtures / "golden" / name)); // scripted-oracle golden
        CHECK(got == read_file(out2 / name));                // byte-identical rerun
    }
    CHECK(read_file(out1 / "fit.json") == read_file(out2 / "fit.json"));

    const auto config = nlohmann::json::parse(read_file(out1 / "config.json"));
    CHECK(config["k"] == 2);
    CHECK(config["min_mean_count"] == 1.0);  // default echoed
    CHECK(config["bias_correct"] == true);
    CHECK(config["pseudocount"] == 0.0);
    const auto manifest = nlohmann::json::parse(read_file(out1 / "manifest.json"));
    CHECK(manifest["command"] == "test");
    CHECK(manifest["n_genes_kept"] == 5);

    const auto fit = nlohmann::json::parse(read_file(out1 / "fit.json"));
    CHECK(fit["k"] == 2);
    CHECK(fit["converged"] == true);
    CHECK(fit["alphas"].size() == 2);
    CHECK(fit["lambda"].size() == 5);
}

TEST_CASE("cli: select-k and simulate emit their tables") {
    const fs::path fixtures(NBMIX_FIXTURE_DIR);
    const auto out = scratch_dir("cli_select");
    REQUIRE(run_cli("select-k --input " + (fixtures / "toy5.tsv").string() + " --cond-file " +
                    (fixtures / "toy5.conditions.tsv").string() +
                    " --k-range 1..3 --out " + out.string()) == 0);
    const std::string criteria = read_file(out / "criteria.tsv");
    CHECK(criteria.find("k\tloglik\taic\tbic\ticl_bic") == 0);
    // header + 3 rows
    CHECK(std::count(criteria.begin(), criteria.end(), '\n') == 4);

    const auto sim_out = scratch_dir("cli_sim");
    REQUIRE(run_cli("simulate --mode errors --p 40 --nj 4 --datasets 3 --k 2 "
                    "--tests difference --seed 7 --out " + sim_out.string()) == 0);
    const std::string metrics = read_file(sim_out / "metrics.tsv");
    CHECK(metrics.find("test\tlevel\ttype1_mean") == 0);
    CHECK(metrics.find("difference\t0.05") != std::string::npos);
    CHECK(metrics.find("difference\t0.001") != std::string::npos);
    const auto manifest = nlohmann::json::parse(read_file(sim_out / "manifest.json"));
    CHECK(manifest["design"]["p"] == 40);

    const auto var_out = scratch_dir("cli_var");
    REQUIRE(run_cli("simulate --mode variance --p 40 --nj 4 --datasets 2 --k-range 1..2 "
                    "--seed 7 --out " + var_out.string()) == 0);
    const std::string var_metrics = read_file(var_out / "metrics.tsv");
    CHECK(var_metrics.find("k\tmean_rel_err\tse\tn_datasets") == 0);
}

TEST_CASE("cli: failures exit nonzero with a machine-readable error") {
    const auto dir = scratch_dir("cli_err");
    write_file(dir / "bad.tsv", "gene\ts1\ts2\ts3\ts4\ngA\t1\t-2\t3\t4\n");
    const fs::path err_file = dir / "stderr.json";
    const int rc = run_cli("fit --input " + (dir / "bad.tsv").string() +
                               " --cond s1=a --cond s2=a --cond s3=b --cond s4=b --k 1 --out " +
                               (dir / "out").string(),
                           err_file);
    CHECK(rc == 1);
    const auto err = nlohmann::json::parse(read_file(err_file));
    CHECK(err["error"]["kind"] == "parse");
    CHECK(err["error"]["module"] == "cli");
}

} // TEST_SUITE("io")
