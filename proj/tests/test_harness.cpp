#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "axdbn/harness.hpp"
#include "axdbn/model_io.hpp"
#include "axdbn/synth.hpp"

using namespace axdbn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        rows.push_back(std::move(fields));
    }
    return rows;
}

ExperimentConfig tiny_config(const std::string& data_dir, const std::string& out) {
    ExperimentConfig c;
    c.arch = {10, 6};
    c.labeled = 250;
    c.unlabeled = 0;
    c.validation_size = 80;
    c.rbm_epochs = 2;
    c.top_epochs = 4;
    c.tolerance = 0.10;
    c.levels = {0, 4, 8, 16, 64};
    c.max_iterations = 3;
    c.prune_fraction = 0.25;
    c.ax_train_subset = 150;
    c.retrain_epochs = 1;
    c.mc_runs = 2;
    c.base_seed = 555;
    c.noise_factors = {0.1};
    c.test_limit = 120;
    c.train_images = data_dir + "/train-images-idx3-ubyte";
    c.train_labels = data_dir + "/train-labels-idx1-ubyte";
    c.test_images = data_dir + "/t10k-images-idx3-ubyte";
    c.test_labels = data_dir + "/t10k-labels-idx1-ubyte";
    c.out_dir = out;
    return c;
}

}  // namespace

TEST_CASE("config parsing") {
    std::istringstream in(
        "# comment\n"
        "arch = 200,100\n"
        "objective = dt\n"
        "labeled = 30000\n"
        "unlabeled = 30000\n"
        "tolerance = 0.01\n"
        "levels = 0,4,8\n"
        "noise_factors = 0.1,0.2,0.3\n"
        "base_seed = 42   # trailing comment\n"
        "out_dir = results/run1\n");
    ExperimentConfig c = parse_config(in);
    CHECK(c.arch == std::vector<std::size_t>{200, 100});
    CHECK(c.objective == Objective::discriminative);
    CHECK(c.labeled == 30000);
    CHECK(c.unlabeled == 30000);
    CHECK(c.tolerance == 0.01);
    CHECK(c.levels == std::vector<int>{0, 4, 8});
    CHECK(c.noise_factors == std::vector<double>{0.1, 0.2, 0.3});
    CHECK(c.base_seed == 42);
    CHECK(c.out_dir == "results/run1");

    std::istringstream bad("no_such_key = 1\n");
    CHECK_THROWS(parse_config(bad));
    std::istringstream malformed("tolerance 0.05\n");
    CHECK_THROWS(parse_config(malformed));
}

TEST_CASE("seed derivation is stable and spreads") {
    CHECK(derive_seed(1, 0) == derive_seed(1, 0));
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    // no short cycles over run indices
    std::set<std::uint64_t> seen;
    for (std::uint64_t r = 0; r < 1000; ++r) seen.insert(derive_seed(99, r));
    CHECK(seen.size() == 1000);
}

TEST_CASE("model container round-trips exactly") {
    Rng rng(3);
    DbnModel m = init_dbn({12, {6, 4}, 5}, 77);
    for (RbmParams& p : m.lower)
        for (double& x : p.w.data) x = rng.uniform(-1, 1);
    for (double& x : m.top.w.data) x = rng.uniform(-1, 1);
    for (double& x : m.top.wc.data) x = rng.uniform(-1, 1);
    BitwidthMap map = BitwidthMap::uniform({6, 4}, 5, 8);
    set_level(map, {0, 2}, 0);
    set_level(map, {2, 1}, 16);

    fs::create_directories("harness_tmp");
    save_model("harness_tmp/m.json", {m, 123, map});
    ModelFile back = load_model("harness_tmp/m.json");
    CHECK(back.model == m);
    CHECK(back.seed == 123);
    REQUIRE(back.map.has_value());
    CHECK(*back.map == map);
}

TEST_CASE("empty record emission") {
    ExperimentConfig c;
    c.out_dir = "harness_tmp/empty";
    SummaryTable s;
    s.mc_runs = 3;
    s.failures = {{0, "boom"}, {1, "boom"}, {2, "boom"}};
    emit_results({}, s, c);
    auto rows = read_csv(c.out_dir + "/runs.csv");
    REQUIRE(rows.size() == 1);  // header only
    CHECK(rows[0][0] == "run");
    nlohmann::json j = nlohmann::json::parse(slurp(c.out_dir + "/summary.json"));
    CHECK(j.at("successful_runs") == 0);
    CHECK(j.at("failed_runs").size() == 3);
    CHECK(j.at("mean").is_null());
}

TEST_CASE("experiment pipeline determinism, CSV schema, and summary consistency") {
    const std::string data_dir = "harness_tmp/data";
    write_synth_idx(data_dir, 600, 200, 2024);

    ExperimentConfig c1 = tiny_config(data_dir, "harness_tmp/out1");
    std::vector<RunRecord> records;
    SummaryTable s = run_experiment(c1, &records);
    CHECK(s.successful_runs == 2);

    ExperimentConfig c2 = tiny_config(data_dir, "harness_tmp/out2");
    run_experiment(c2);

    // byte-identical outputs across repeated invocations
    CHECK(slurp("harness_tmp/out1/runs.csv") == slurp("harness_tmp/out2/runs.csv"));
    CHECK(slurp("harness_tmp/out1/summary.json") ==
          slurp("harness_tmp/out2/summary.json"));
    CHECK(slurp("harness_tmp/out1/model_run000.json") ==
          slurp("harness_tmp/out2/model_run000.json"));

    // row count: successful_runs x (1 + |noise_factors|), plus the header
    auto rows = read_csv("harness_tmp/out1/runs.csv");
    REQUIRE(rows.size() == 1 + 2 * (1 + c1.noise_factors.size()));
    CHECK(rows[0] == std::vector<std::string>{"run", "seed", "objective", "arch",
                                              "mode", "tolerance", "fp_acc",
                                              "br_acc", "avg_bitwidth", "noise",
                                              "fp_acc_noisy", "br_acc_noisy"});

    // the CSV fields round-trip the in-memory records
    const auto& r0 = rows[1];
    CHECK(std::stoul(r0[0]) == records[0].run);
    CHECK(r0[2] == "gt");
    CHECK(r0[3] == "10-6");
    CHECK(r0[4] == "supervised");
    CHECK(std::stod(r0[6]) == doctest::Approx(records[0].fp_acc).epsilon(1e-12));
    CHECK(std::stod(r0[7]) == doctest::Approx(records[0].br_acc).epsilon(1e-12));
    CHECK(std::stod(r0[8]) == doctest::Approx(records[0].avg_bits).epsilon(1e-12));

    // summary means recomputed from the CSV agree with summary.json
    double fp_sum = 0, br_sum = 0, bits_sum = 0, noisy_fp = 0, noisy_br = 0;
    int clean_rows = 0, noise_rows = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (std::stod(rows[i][9]) == 0.0) {
            fp_sum += std::stod(rows[i][6]);
            br_sum += std::stod(rows[i][7]);
            bits_sum += std::stod(rows[i][8]);
            ++clean_rows;
        } else {
            noisy_fp += std::stod(rows[i][10]);
            noisy_br += std::stod(rows[i][11]);
            ++noise_rows;
        }
    }
    nlohmann::json j = nlohmann::json::parse(slurp("harness_tmp/out1/summary.json"));
    CHECK(std::fabs(j["mean"]["fp_acc"].get<double>() - fp_sum / clean_rows) < 1e-9);
    CHECK(std::fabs(j["mean"]["br_acc"].get<double>() - br_sum / clean_rows) < 1e-9);
    CHECK(std::fabs(j["mean"]["avg_bitwidth"].get<double>() - bits_sum / clean_rows) <
          1e-9);
    CHECK(std::fabs(j["mean"]["noise"][0]["fp_acc"].get<double>() -
                    noisy_fp / noise_rows) < 1e-9);
    CHECK(std::fabs(j["mean"]["noise"][0]["br_acc"].get<double>() -
                    noisy_br / noise_rows) < 1e-9);

    // the emitted model container reproduces the recorded run
    ModelFile mf = load_model("harness_tmp/out1/model_run000.json");
    CHECK(mf.model == records[0].approx.model);
    REQUIRE(mf.map.has_value());
    CHECK(*mf.map == records[0].approx.map);
}
