#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ax.hpp"
#include "data.hpp"
#include "parallel.hpp"
#include "dbn.hpp"
#include "model_io.hpp"
#include "rng.hpp"

namespace axdbn {

// One-process Monte Carlo experiment runner: split / train / approximate /
// evaluate per run with per-run derived seeds, then aggregate means and
// emit runs.csv + summary.json + a model container per run.

struct ExperimentConfig {
    // model and objective
    std::vector<std::size_t> arch = {50, 25};
    std::size_t num_classes = 10;
    Objective objective = Objective::generative;
    std::size_t labeled = 10000;
    std::size_t unlabeled = 0;  // > 0 selects semi-supervised mode
    double beta = 0.1;
    std::vector<double> beta_grid;  // optional grid-search hook

    // training
    double rbm_lr = 0.05;
    std::size_t rbm_epochs = 20;
    std::size_t rbm_cd_k = 1;
    double rbm_weight_decay = -1.0;  // < 0: use weight_decay
    double top_lr = 0.05;
    std::size_t top_epochs = 30;
    std::size_t top_cd_k = 1;
    std::size_t batch_size = 50;
    double momentum = 0.5;
    double weight_decay = 1e-4;
    double bias_decay = 0.0;

    // approximation loop
    double tolerance = 0.05;
    std::vector<int> levels = standard_levels();
    double prune_fraction = 0.10;
    std::size_t max_iterations = 60;
    double retrain_lr = 0.02;
    std::size_t retrain_epochs = 1;
    std::size_t ax_train_subset = 3000;
    std::size_t validation_size = 1000;
    bool eval_on_test = false;  // tolerance checks against test data instead
                                // of the held-out validation split

    // Monte Carlo
    std::size_t mc_runs = 10;
    std::uint64_t base_seed = 1;
    std::vector<double> noise_factors = {0.1, 0.2, 0.3};
    std::size_t test_limit = 0;  // 0 = use the whole test set

    // I/O
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    std::string out_dir = "results";
};

inline void validate(const ExperimentConfig& c) {
    require(!c.arch.empty(), "config: arch must have at least one hidden layer");
    require(c.mc_runs >= 1, "config: mc_runs must be >= 1");
    require(c.labeled >= 1, "config: labeled count must be >= 1");
    for (double f : c.noise_factors)
        require(f >= 0.0 && f <= 1.0, "config: noise factor outside [0,1]");
    require(c.tolerance > 0.0, "config: tolerance must be > 0");
}

struct NoiseRecord {
    double factor = 0.0;
    double fp_acc = 0.0;
    double br_acc = 0.0;
};

struct RunRecord {
    std::size_t run = 0;
    std::uint64_t seed = 0;
    double fp_acc = 0.0;
    double br_acc = 0.0;
    double avg_bits = 0.0;
    bool tolerance_met = false;
    std::vector<NoiseRecord> noisy;
    double wall_seconds = 0.0;  // logged, never serialized (determinism)
    ApproxResult approx;        // backing model + map for the container
};

struct SummaryTable {
    std::size_t mc_runs = 0;
    std::size_t successful_runs = 0;
    std::vector<std::pair<std::size_t, std::string>> failures;
    double fp_acc = 0.0;
    double br_acc = 0.0;
    double avg_bits = 0.0;
    double tolerance_met_rate = 0.0;
    std::vector<NoiseRecord> noisy;  // means per configured factor
};

// ---- config file ----

namespace cfgio {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
inline std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        std::stringstream is(item);
        T v;
        is >> v;
        if (is.fail()) throw std::runtime_error("config: bad list item '" + item + "'");
        out.push_back(v);
    }
    return out;
}

inline Objective parse_objective(const std::string& s) {
    if (s == "gt" || s == "generative") return Objective::generative;
    if (s == "dt" || s == "discriminative") return Objective::discriminative;
    throw std::runtime_error("config: objective must be gt or dt, got '" + s + "'");
}

inline const char* objective_name(Objective o) {
    return o == Objective::generative ? "gt" : "dt";
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::runtime_error("config: bad boolean '" + s + "'");
}

}  // namespace cfgio

// Applies one `key = value` assignment; throws on unknown keys.
inline void apply_config_entry(ExperimentConfig& c, const std::string& key,
                               const std::string& value) {
    using namespace cfgio;
    if (key == "arch") c.arch = parse_list<std::size_t>(value);
    else if (key == "num_classes") c.num_classes = std::stoul(value);
    else if (key == "objective") c.objective = parse_objective(value);
    else if (key == "labeled") c.labeled = std::stoul(value);
    else if (key == "unlabeled") c.unlabeled = std::stoul(value);
    else if (key == "beta") c.beta = std::stod(value);
    else if (key == "beta_grid") c.beta_grid = parse_list<double>(value);
    else if (key == "rbm_lr") c.rbm_lr = std::stod(value);
    else if (key == "rbm_epochs") c.rbm_epochs = std::stoul(value);
    else if (key == "rbm_cd_k") c.rbm_cd_k = std::stoul(value);
    else if (key == "rbm_weight_decay") c.rbm_weight_decay = std::stod(value);
    else if (key == "top_lr") c.top_lr = std::stod(value);
    else if (key == "top_epochs") c.top_epochs = std::stoul(value);
    else if (key == "top_cd_k") c.top_cd_k = std::stoul(value);
    else if (key == "batch_size") c.batch_size = std::stoul(value);
    else if (key == "momentum") c.momentum = std::stod(value);
    else if (key == "weight_decay") c.weight_decay = std::stod(value);
    else if (key == "bias_decay") c.bias_decay = std::stod(value);
    else if (key == "tolerance") c.tolerance = std::stod(value);
    else if (key == "levels") c.levels = parse_list<int>(value);
    else if (key == "prune_fraction") c.prune_fraction = std::stod(value);
    else if (key == "max_iterations") c.max_iterations = std::stoul(value);
    else if (key == "retrain_lr") c.retrain_lr = std::stod(value);
    else if (key == "retrain_epochs") c.retrain_epochs = std::stoul(value);
    else if (key == "ax_train_subset") c.ax_train_subset = std::stoul(value);
    else if (key == "validation_size") c.validation_size = std::stoul(value);
    else if (key == "eval_on_test") c.eval_on_test = parse_bool(value);
    else if (key == "mc_runs") c.mc_runs = std::stoul(value);
    else if (key == "base_seed") c.base_seed = std::stoull(value);
    else if (key == "noise_factors") c.noise_factors = parse_list<double>(value);
    else if (key == "test_limit") c.test_limit = std::stoul(value);
    else if (key == "train_images") c.train_images = value;
    else if (key == "train_labels") c.train_labels = value;
    else if (key == "test_images") c.test_images = value;
    else if (key == "test_labels") c.test_labels = value;
    else if (key == "out_dir") c.out_dir = value;
    else throw std::runtime_error("config: unknown key '" + key + "'");
}

inline ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = cfgio::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        apply_config_entry(c, cfgio::trim(line.substr(0, eq)),
                           cfgio::trim(line.substr(eq + 1)));
    }
    return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    return parse_config(in);
}

// ---- per-run pipeline ----

namespace seed_tag {
constexpr std::uint64_t split = 1;
constexpr std::uint64_t init = 2;
constexpr std::uint64_t rbm_base = 100;  // + layer index
constexpr std::uint64_t top = 200;
constexpr std::uint64_t retrain = 300;
constexpr std::uint64_t ax_subset = 400;
constexpr std::uint64_t noise_base = 500;  // + noise index
}  // namespace seed_tag

inline DbnTrainConfig make_train_config(const ExperimentConfig& c,
                                        std::uint64_t run_seed) {
    DbnTrainConfig tc;
    tc.objective = c.objective;
    tc.init_seed = derive_seed(run_seed, seed_tag::init);
    const double rbm_wd =
        c.rbm_weight_decay >= 0.0 ? c.rbm_weight_decay : c.weight_decay;
    for (std::size_t l = 0; l + 1 < c.arch.size(); ++l)
        tc.layers.push_back({c.rbm_lr, c.rbm_epochs, c.batch_size, c.rbm_cd_k,
                             c.momentum, rbm_wd,
                             derive_seed(run_seed, seed_tag::rbm_base + l),
                             c.bias_decay});
    tc.layers.push_back({c.top_lr, c.top_epochs, c.batch_size, c.top_cd_k,
                         c.momentum, c.weight_decay,
                         derive_seed(run_seed, seed_tag::top), c.bias_decay});
    if (c.unlabeled > 0) tc.ssl = SslConfig{c.beta, c.objective};
    return tc;
}

inline AxConfig make_ax_config(const ExperimentConfig& c, std::uint64_t run_seed) {
    AxConfig ax;
    ax.tolerance = c.tolerance;
    ax.levels = c.levels;
    ax.prune_fraction = c.prune_fraction;
    ax.max_iterations = c.max_iterations;
    ax.retrain = {c.retrain_lr, c.retrain_epochs, c.batch_size, c.rbm_cd_k,
                  c.momentum, c.weight_decay,
                  derive_seed(run_seed, seed_tag::retrain), c.bias_decay};
    return ax;
}

inline Dataset subset_of(const Dataset& d, std::size_t count, std::uint64_t seed) {
    if (count >= d.size()) return d;
    Rng rng(seed);
    std::vector<std::size_t> idx = rng.permutation(d.size());
    Dataset out;
    out.num_classes = d.num_classes;
    for (std::size_t i = 0; i < count; ++i) {
        out.images.push_back(d.images[idx[i]]);
        if (d.labeled()) out.labels.push_back(d.labels[idx[i]]);
    }
    return out;
}

inline RunRecord run_one(const ExperimentConfig& c, std::size_t run,
                         const Dataset& train_pool, const Dataset& test) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t run_seed = derive_seed(c.base_seed, run);

    // one shuffle yields labeled-train, validation, and unlabeled, disjoint
    require(c.labeled + c.validation_size + c.unlabeled <= train_pool.size(),
            "run: labeled + validation + unlabeled exceeds the training pool");
    auto [labeled_all, unlabeled] = split_semi_supervised(
        train_pool, {c.labeled + c.validation_size, c.unlabeled,
                     derive_seed(run_seed, seed_tag::split)});
    Dataset labeled_train, validation;
    labeled_train.num_classes = validation.num_classes = train_pool.num_classes;
    for (std::size_t i = 0; i < c.labeled; ++i) {
        labeled_train.images.push_back(std::move(labeled_all.images[i]));
        labeled_train.labels.push_back(labeled_all.labels[i]);
    }
    for (std::size_t i = c.labeled; i < labeled_all.size(); ++i) {
        validation.images.push_back(std::move(labeled_all.images[i]));
        validation.labels.push_back(labeled_all.labels[i]);
    }

    const Dataset& eval_set = c.eval_on_test ? test : validation;
    require(eval_set.size() > 0, "run: empty tolerance eval set");

    Architecture arch{train_pool.images[0].size(), c.arch,
                      static_cast<std::size_t>(c.num_classes)};
    const DbnTrainConfig tc = make_train_config(c, run_seed);
    DbnModel model = train_greedy(arch, labeled_train, unlabeled, tc);

    RunRecord rec;
    rec.run = run;
    rec.seed = run_seed;
    rec.fp_acc = accuracy(model, test);

    const Dataset ax_labeled =
        subset_of(labeled_train, c.ax_train_subset,
                  derive_seed(run_seed, seed_tag::ax_subset));
    const Dataset ax_unlabeled =
        subset_of(unlabeled, c.ax_train_subset,
                  derive_seed(run_seed, seed_tag::ax_subset + 1));
    rec.approx = ax_dbn(model, ax_labeled, ax_unlabeled, eval_set,
                        make_ax_config(c, run_seed), tc);
    rec.avg_bits = rec.approx.avg_bits;
    rec.tolerance_met = rec.approx.tolerance_met;

    const DbnModel reduced = apply_bitwidth_map(rec.approx.model, rec.approx.map);
    rec.br_acc = accuracy(reduced, test);

    for (std::size_t i = 0; i < c.noise_factors.size(); ++i) {
        Dataset noisy;
        noisy.num_classes = test.num_classes;
        noisy.labels = test.labels;
        noisy.images = apply_salt_pepper(
            test.images, {c.noise_factors[i],
                          derive_seed(run_seed, seed_tag::noise_base + i)});
        rec.noisy.push_back({c.noise_factors[i], accuracy(model, noisy),
                             accuracy(reduced, noisy)});
    }

    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

// ---- aggregation and emission ----

inline SummaryTable summarize(const ExperimentConfig& c,
                              const std::vector<RunRecord>& records) {
    SummaryTable s;
    s.mc_runs = c.mc_runs;
    s.successful_runs = records.size();
    if (records.empty()) return s;
    const double inv = 1.0 / static_cast<double>(records.size());
    for (std::size_t i = 0; i < c.noise_factors.size(); ++i)
        s.noisy.push_back({c.noise_factors[i], 0.0, 0.0});
    for (const RunRecord& r : records) {
        s.fp_acc += r.fp_acc * inv;
        s.br_acc += r.br_acc * inv;
        s.avg_bits += r.avg_bits * inv;
        s.tolerance_met_rate += (r.tolerance_met ? 1.0 : 0.0) * inv;
        for (std::size_t i = 0; i < r.noisy.size(); ++i) {
            s.noisy[i].fp_acc += r.noisy[i].fp_acc * inv;
            s.noisy[i].br_acc += r.noisy[i].br_acc * inv;
        }
    }
    return s;
}

namespace cfgio {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string arch_name(const std::vector<std::size_t>& arch) {
    std::string s;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        if (i) s += '-';
        s += std::to_string(arch[i]);
    }
    return s;
}

inline std::string mode_name(const ExperimentConfig& c) {
    if (c.unlabeled == 0) return "supervised";
    return "ssl-" + std::to_string(c.labeled) + "-" + std::to_string(c.unlabeled);
}

}  // namespace cfgio

constexpr const char* kRunsCsvHeader =
    "run,seed,objective,arch,mode,tolerance,fp_acc,br_acc,avg_bitwidth,noise,"
    "fp_acc_noisy,br_acc_noisy";

// Writes runs.csv (one row per run per noise factor, plus a noise=0 row per
// run), summary.json mirroring the SummaryTable, and one model container per
// run. Outputs are byte-identical across invocations with the same config
// and base seed.
inline void emit_results(const std::vector<RunRecord>& records,
                         const SummaryTable& summary, const ExperimentConfig& c) {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    using cfgio::fmt_double;

    {
        std::ofstream csv(c.out_dir + "/runs.csv", std::ios::binary);
        if (!csv) throw std::runtime_error("cannot write runs.csv in " + c.out_dir);
        csv << kRunsCsvHeader << "\n";
        for (const RunRecord& r : records) {
            auto prefix = [&](std::ostream& os) {
                os << r.run << ',' << r.seed << ','
                   << cfgio::objective_name(c.objective) << ','
                   << cfgio::arch_name(c.arch) << ',' << cfgio::mode_name(c) << ','
                   << fmt_double(c.tolerance) << ',' << fmt_double(r.fp_acc) << ','
                   << fmt_double(r.br_acc) << ',' << fmt_double(r.avg_bits) << ',';
            };
            prefix(csv);
            csv << "0," << fmt_double(r.fp_acc) << ',' << fmt_double(r.br_acc)
                << "\n";
            for (const NoiseRecord& n : r.noisy) {
                prefix(csv);
                csv << fmt_double(n.factor) << ',' << fmt_double(n.fp_acc) << ','
                    << fmt_double(n.br_acc) << "\n";
            }
        }
    }

    {
        nlohmann::json j;
        j["config"] = {{"arch", cfgio::arch_name(c.arch)},
                       {"objective", cfgio::objective_name(c.objective)},
                       {"mode", cfgio::mode_name(c)},
                       {"labeled", c.labeled},
                       {"unlabeled", c.unlabeled},
                       {"tolerance", c.tolerance},
                       {"levels", c.levels},
                       {"mc_runs", c.mc_runs},
                       {"base_seed", c.base_seed},
                       {"noise_factors", c.noise_factors}};
        j["mc_runs"] = summary.mc_runs;
        j["successful_runs"] = summary.successful_runs;
        nlohmann::json failures = nlohmann::json::array();
        for (const auto& [run, msg] : summary.failures)
            failures.push_back({{"run", run}, {"error", msg}});
        j["failed_runs"] = std::move(failures);
        if (summary.successful_runs > 0) {
            nlohmann::json noisy = nlohmann::json::array();
            for (const NoiseRecord& n : summary.noisy)
                noisy.push_back({{"factor", n.factor},
                                 {"fp_acc", n.fp_acc},
                                 {"br_acc", n.br_acc}});
            j["mean"] = {{"fp_acc", summary.fp_acc},
                         {"br_acc", summary.br_acc},
                         {"avg_bitwidth", summary.avg_bits},
                         {"tolerance_met_rate", summary.tolerance_met_rate},
                         {"noise", std::move(noisy)}};
        } else {
            j["mean"] = nullptr;
            j["note"] = "zero successful runs";
        }
        std::ofstream out(c.out_dir + "/summary.json", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write summary.json");
        out << j.dump(2) << "\n";
    }

    for (const RunRecord& r : records) {
        char name[32];
        std::snprintf(name, sizeof name, "model_run%03zu.json", r.run);
        save_model(c.out_dir + "/" + name,
                   ModelFile{r.approx.model, r.seed, r.approx.map});
    }
}

// Monte Carlo runs are independent: they execute on the worker pool, each
// owning its model and RNG stream, and results reduce in run-index order so
// the outputs never depend on scheduling.
inline SummaryTable run_experiment(const ExperimentConfig& c,
                                   const Dataset& train_pool, const Dataset& test,
                                   std::vector<RunRecord>* out_records = nullptr) {
    validate(c);
    std::vector<std::optional<RunRecord>> slots(c.mc_runs);
    std::vector<std::optional<std::string>> errors(c.mc_runs);
    parallel_for(c.mc_runs, [&](std::size_t run) {
        try {
            slots[run] = run_one(c, run, train_pool, test);
        } catch (const std::exception& e) {
            errors[run] = e.what();
        }
    });
    std::vector<RunRecord> records;
    std::vector<std::pair<std::size_t, std::string>> failures;
    for (std::size_t run = 0; run < c.mc_runs; ++run) {
        if (slots[run]) {
            records.push_back(std::move(*slots[run]));
            std::cerr << "[run " << run << "] fp=" << records.back().fp_acc
                      << " br=" << records.back().br_acc
                      << " bits=" << records.back().avg_bits
                      << " met=" << records.back().tolerance_met << " ("
                      << records.back().wall_seconds << "s)\n";
        } else {
            std::cerr << "[run " << run << "] failed: " << *errors[run] << "\n";
            failures.emplace_back(run, *errors[run]);
        }
    }
    SummaryTable summary = summarize(c, records);
    summary.failures = std::move(failures);
    emit_results(records, summary, c);
    if (out_records) *out_records = std::move(records);
    return summary;
}

// Loads data per config and runs the experiment. The test set may be
// truncated via test_limit for desk-scale runs.
inline SummaryTable run_experiment(const ExperimentConfig& c,
                                   std::vector<RunRecord>* out_records = nullptr) {
    Dataset train = load_dataset(c.train_images, c.train_labels,
                                 static_cast<int>(c.num_classes));
    Dataset test = load_dataset(c.test_images, c.test_labels,
                                static_cast<int>(c.num_classes));
    if (c.test_limit > 0 && c.test_limit < test.size()) {
        test.images.resize(c.test_limit);
        test.labels.resize(c.test_limit);
    }
    return run_experiment(c, train, test, out_records);
}

// beta grid-search hook: trains one model per candidate on the run-0 split
// and returns the beta with the best eval accuracy.
inline double grid_search_beta(const ExperimentConfig& base, const Dataset& train_pool,
                               const Dataset& test) {
    if (base.beta_grid.empty()) return base.beta;
    double best_beta = base.beta_grid.front();
    double best_acc = -1.0;
    for (double beta : base.beta_grid) {
        ExperimentConfig c = base;
        c.beta = beta;
        const std::uint64_t run_seed = derive_seed(c.base_seed, 0);
        auto [labeled_all, unlabeled] = split_semi_supervised(
            train_pool, {c.labeled + c.validation_size, c.unlabeled,
                         derive_seed(run_seed, seed_tag::split)});
        Dataset labeled_train, validation;
        labeled_train.num_classes = validation.num_classes = train_pool.num_classes;
        for (std::size_t i = 0; i < c.labeled; ++i) {
            labeled_train.images.push_back(std::move(labeled_all.images[i]));
            labeled_train.labels.push_back(labeled_all.labels[i]);
        }
        for (std::size_t i = c.labeled; i < labeled_all.size(); ++i) {
            validation.images.push_back(std::move(labeled_all.images[i]));
            validation.labels.push_back(labeled_all.labels[i]);
        }
        Architecture arch{train_pool.images[0].size(), c.arch, c.num_classes};
        DbnModel model =
            train_greedy(arch, labeled_train, unlabeled, make_train_config(c, run_seed));
        const Dataset& eval_set =
            c.eval_on_test ? test : (validation.size() ? validation : test);
        const double acc = accuracy(model, eval_set);
        std::cerr << "[beta-grid] beta=" << beta << " acc=" << acc << "\n";
        if (acc > best_acc) {
            best_acc = acc;
            best_beta = beta;
        }
    }
    return best_beta;
}

}  // namespace axdbn
