// Command-line front end: train / approximate / evaluate DDBN models, run
// the full Monte Carlo experiment pipeline, generate synthetic data, and
// run the tiny-model oracle battery.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "axdbn/ax.hpp"
#include "axdbn/data.hpp"
#include "axdbn/dbn.hpp"
#include "axdbn/enumeration.hpp"
#include "axdbn/harness.hpp"
#include "axdbn/model_io.hpp"
#include "axdbn/synth.hpp"

namespace {

struct CliOverrides {
    std::string config_path;
    std::optional<std::size_t> runs;
    std::optional<double> tolerance;
    std::optional<std::string> objective;
    std::optional<std::string> arch;
    std::optional<std::size_t> labeled;
    std::optional<std::size_t> unlabeled;
    std::optional<std::string> levels;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> beta_grid;
};

void add_common_options(CLI::App* cmd, CliOverrides& o) {
    cmd->add_option("--config", o.config_path, "experiment config file");
    cmd->add_option("--runs", o.runs, "Monte Carlo run count");
    cmd->add_option("--tolerance", o.tolerance, "accuracy tolerance, e.g. 0.05");
    cmd->add_option("--objective", o.objective, "gt or dt");
    cmd->add_option("--arch", o.arch, "hidden layer widths, e.g. 200,100");
    cmd->add_option("--labeled", o.labeled, "labeled sample count");
    cmd->add_option("--unlabeled", o.unlabeled, "unlabeled sample count");
    cmd->add_option("--levels", o.levels, "bitwidth search space, e.g. 0,4,8");
    cmd->add_option("--seed", o.seed, "base RNG seed");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--beta-grid", o.beta_grid,
                    "beta candidates for the grid-search hook, e.g. 0.001,0.1");
}

axdbn::ExperimentConfig build_config(const CliOverrides& o) {
    axdbn::ExperimentConfig c;
    if (!o.config_path.empty()) c = axdbn::parse_config_file(o.config_path);
    if (o.runs) c.mc_runs = *o.runs;
    if (o.tolerance) c.tolerance = *o.tolerance;
    if (o.objective) c.objective = axdbn::cfgio::parse_objective(*o.objective);
    if (o.arch) c.arch = axdbn::cfgio::parse_list<std::size_t>(*o.arch);
    if (o.labeled) c.labeled = *o.labeled;
    if (o.unlabeled) c.unlabeled = *o.unlabeled;
    if (o.levels) c.levels = axdbn::cfgio::parse_list<int>(*o.levels);
    if (o.seed) c.base_seed = *o.seed;
    if (o.out) c.out_dir = *o.out;
    if (o.beta_grid) c.beta_grid = axdbn::cfgio::parse_list<double>(*o.beta_grid);
    return c;
}

int cmd_run(const CliOverrides& o) {
    axdbn::ExperimentConfig c = build_config(o);
    axdbn::Dataset train = axdbn::load_dataset(c.train_images, c.train_labels,
                                               int(c.num_classes));
    axdbn::Dataset test = axdbn::load_dataset(c.test_images, c.test_labels,
                                              int(c.num_classes));
    if (c.test_limit > 0 && c.test_limit < test.size()) {
        test.images.resize(c.test_limit);
        test.labels.resize(c.test_limit);
    }
    if (!c.beta_grid.empty()) {
        c.beta = axdbn::grid_search_beta(c, train, test);
        std::cerr << "selected beta = " << c.beta << "\n";
    }
    axdbn::SummaryTable s = axdbn::run_experiment(c, train, test);
    std::cout << "runs " << s.successful_runs << "/" << s.mc_runs
              << "  mean fp_acc " << s.fp_acc << "  mean br_acc " << s.br_acc
              << "  mean avg_bitwidth " << s.avg_bits << "\n"
              << "results written to " << c.out_dir << "\n";
    return s.successful_runs == 0 ? 1 : 0;
}

// trains the run-0 model and stores it as a container
int cmd_train(const CliOverrides& o, const std::string& model_out) {
    axdbn::ExperimentConfig c = build_config(o);
    axdbn::validate(c);
    axdbn::Dataset train = axdbn::load_dataset(c.train_images, c.train_labels,
                                               int(c.num_classes));
    const std::uint64_t run_seed = axdbn::derive_seed(c.base_seed, 0);
    auto [labeled_all, unlabeled] = axdbn::split_semi_supervised(
        train, {c.labeled, c.unlabeled,
                axdbn::derive_seed(run_seed, axdbn::seed_tag::split)});
    axdbn::Architecture arch{train.images[0].size(), c.arch, c.num_classes};
    axdbn::DbnModel model = axdbn::train_greedy(
        arch, labeled_all, unlabeled, axdbn::make_train_config(c, run_seed));
    axdbn::save_model(model_out, {model, run_seed, std::nullopt});
    std::cout << "model written to " << model_out << "\n";
    return 0;
}

int cmd_approximate(const CliOverrides& o, const std::string& model_in) {
    axdbn::ExperimentConfig c = build_config(o);
    axdbn::ModelFile mf = axdbn::load_model(model_in);
    axdbn::Dataset train = axdbn::load_dataset(c.train_images, c.train_labels,
                                               int(c.num_classes));
    const std::uint64_t run_seed = mf.seed;
    auto [labeled_all, unlabeled] = axdbn::split_semi_supervised(
        train, {c.labeled + c.validation_size, c.unlabeled,
                axdbn::derive_seed(run_seed, axdbn::seed_tag::split)});
    axdbn::Dataset labeled_train, validation;
    labeled_train.num_classes = validation.num_classes = train.num_classes;
    for (std::size_t i = 0; i < c.labeled; ++i) {
        labeled_train.images.push_back(std::move(labeled_all.images[i]));
        labeled_train.labels.push_back(labeled_all.labels[i]);
    }
    for (std::size_t i = c.labeled; i < labeled_all.size(); ++i) {
        validation.images.push_back(std::move(labeled_all.images[i]));
        validation.labels.push_back(labeled_all.labels[i]);
    }
    const axdbn::Dataset ax_labeled = axdbn::subset_of(
        labeled_train, c.ax_train_subset,
        axdbn::derive_seed(run_seed, axdbn::seed_tag::ax_subset));
    const axdbn::Dataset ax_unlabeled = axdbn::subset_of(
        unlabeled, c.ax_train_subset,
        axdbn::derive_seed(run_seed, axdbn::seed_tag::ax_subset + 1));

    axdbn::ApproxResult res =
        axdbn::ax_dbn(mf.model, ax_labeled, ax_unlabeled, validation,
                      axdbn::make_ax_config(c, run_seed),
                      axdbn::make_train_config(c, run_seed));

    std::filesystem::create_directories(c.out_dir);
    axdbn::save_model(c.out_dir + "/model_approx.json",
                      {res.model, run_seed, res.map});
    std::ofstream hist(c.out_dir + "/history.csv", std::ios::binary);
    hist << "iteration,accuracy,avg_bitwidth,neurons_changed,accepted\n";
    for (const auto& h : res.history)
        hist << h.iteration << ',' << axdbn::cfgio::fmt_double(h.accuracy) << ','
             << axdbn::cfgio::fmt_double(h.avg_bits) << ',' << h.neurons_changed
             << ',' << (h.accepted ? 1 : 0) << "\n";
    std::cout << "fp_acc(eval) " << res.fp_accuracy << "  br_acc(eval) "
              << res.br_accuracy << "  avg_bitwidth " << res.avg_bits
              << "  tolerance_met " << res.tolerance_met << "\n"
              << "approximated model and history written to " << c.out_dir << "\n";
    return 0;
}

int cmd_evaluate(const CliOverrides& o, const std::string& model_in,
                 double noise, std::uint64_t noise_seed) {
    axdbn::ExperimentConfig c = build_config(o);
    axdbn::ModelFile mf = axdbn::load_model(model_in);
    axdbn::Dataset test = axdbn::load_dataset(c.test_images, c.test_labels,
                                              int(c.num_classes));
    if (c.test_limit > 0 && c.test_limit < test.size()) {
        test.images.resize(c.test_limit);
        test.labels.resize(c.test_limit);
    }
    if (noise > 0.0)
        test.images = axdbn::apply_salt_pepper(test.images, {noise, noise_seed});
    axdbn::DbnModel model = mf.map ? axdbn::apply_bitwidth_map(mf.model, *mf.map)
                                   : mf.model;
    std::cout << "accuracy " << axdbn::accuracy(model, test) << "  cross_entropy "
              << axdbn::cross_entropy(model, test);
    if (mf.map) std::cout << "  avg_bitwidth " << axdbn::avg_bitwidth(*mf.map);
    std::cout << "\n";
    return 0;
}

// Tiny-model battery: free-energy identity, posterior enumeration, and
// finite-difference gradient checks. Exits nonzero on any failure.
int cmd_oracle_check() {
    using namespace axdbn;
    int failures = 0;
    auto check = [&](bool ok, const std::string& name) {
        std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
        if (!ok) ++failures;
    };

    Rng rng(20240811);
    auto random_drbm = [&](std::size_t v, std::size_t h, std::size_t c) {
        DrbmParams p = init_drbm(v, h, c, rng);
        for (double& x : p.w.data) x = rng.uniform(-0.8, 0.8);
        for (double& x : p.wc.data) x = rng.uniform(-0.8, 0.8);
        for (double& x : p.b_vis) x = rng.uniform(-0.5, 0.5);
        for (double& x : p.b_hid) x = rng.uniform(-0.5, 0.5);
        for (double& x : p.b_cls) x = rng.uniform(-0.5, 0.5);
        return p;
    };

    bool fe_ok = true, post_ok = true;
    for (int t = 0; t < 20; ++t) {
        DrbmParams p = random_drbm(4, 5, 3);
        Vec x(4);
        for (double& xi : x) xi = rng.bernoulli(0.5) ? 1.0 : 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            Vec neg_e;
            for (unsigned mh = 0; mh < (1u << 5); ++mh) {
                Vec h(5);
                for (std::size_t j = 0; j < 5; ++j) h[j] = (mh >> j) & 1u;
                neg_e.push_back(-energy(p, x, c, h));
            }
            if (std::fabs(log_sum_exp(neg_e) + free_energy(p, x, c)) > 1e-10)
                fe_ok = false;
        }
        Vec post = class_posterior(p, x);
        Vec oracle = drbm_exact_posterior(p, x);
        for (std::size_t c = 0; c < 3; ++c)
            if (std::fabs(post[c] - oracle[c]) > 1e-10) post_ok = false;
    }
    check(fe_ok, "free energy matches sum over hidden configurations");
    check(post_ok, "class posterior matches (c,h) enumeration");

    // finite differences of L_disc
    bool disc_ok = true;
    {
        DrbmParams p = random_drbm(3, 3, 3);
        std::vector<Vec> xs = {{1, 0, 1}, {0, 1, 0}, {1, 1, 0}};
        std::vector<int> ys = {0, 1, 2};
        DrbmGrad g = disc_gradient(p, xs, ys);
        auto loss = [&] {
            double s = 0.0;
            for (std::size_t n = 0; n < xs.size(); ++n)
                s -= std::log(class_posterior(p, xs[n])[std::size_t(ys[n])]);
            return s / double(xs.size());
        };
        auto fd_check = [&](double* param, double analytic) {
            const double eps = 1e-5, orig = *param;
            *param = orig + eps;
            const double fp = loss();
            *param = orig - eps;
            const double fm = loss();
            *param = orig;
            const double fd = (fp - fm) / (2 * eps);
            if (std::fabs(fd - analytic) >
                1e-6 * std::max({1.0, std::fabs(fd), std::fabs(analytic)}))
                disc_ok = false;
        };
        for (std::size_t i = 0; i < p.w.data.size(); ++i)
            fd_check(&p.w.data[i], g.w.data[i]);
        for (std::size_t i = 0; i < p.wc.data.size(); ++i)
            fd_check(&p.wc.data[i], g.wc.data[i]);
        for (std::size_t i = 0; i < p.b_hid.size(); ++i)
            fd_check(&p.b_hid[i], g.b_hid[i]);
        for (std::size_t i = 0; i < p.b_cls.size(); ++i)
            fd_check(&p.b_cls[i], g.b_cls[i]);
        for (double v : g.b_vis)
            if (v != 0.0) disc_ok = false;
    }
    check(disc_ok, "discriminative gradient matches finite differences");

    std::cout << (failures == 0 ? "oracle-check passed\n" : "oracle-check FAILED\n");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"discriminative deep belief networks with heterogeneous "
                 "fixed-point approximation"};
    app.require_subcommand(1);

    CliOverrides run_o, train_o, approx_o, eval_o;
    std::string model_out = "model.json";
    std::string model_in;
    double eval_noise = 0.0;
    std::uint64_t eval_noise_seed = 0;

    CLI::App* run = app.add_subcommand("run", "full Monte Carlo pipeline");
    add_common_options(run, run_o);

    CLI::App* train = app.add_subcommand("train", "train one model");
    add_common_options(train, train_o);
    train->add_option("--model-out", model_out, "output model container");

    CLI::App* approx =
        app.add_subcommand("approximate", "run the bitwidth reduction loop");
    add_common_options(approx, approx_o);
    approx->add_option("--model", model_in, "trained model container")->required();

    CLI::App* eval = app.add_subcommand("evaluate", "evaluate a model container");
    add_common_options(eval, eval_o);
    eval->add_option("--model", model_in, "model container")->required();
    eval->add_option("--noise", eval_noise, "salt-and-pepper noise factor");
    eval->add_option("--noise-seed", eval_noise_seed, "noise RNG seed");

    std::string synth_dir = "data";
    std::size_t synth_train = 12000, synth_test = 2000;
    std::uint64_t synth_seed = 7;
    CLI::App* synth =
        app.add_subcommand("synth", "generate synthetic MNIST-format IDX files");
    synth->add_option("--out", synth_dir, "output directory");
    synth->add_option("--train", synth_train, "training image count");
    synth->add_option("--test", synth_test, "test image count");
    synth->add_option("--seed", synth_seed, "generator seed");

    CLI::App* oracle =
        app.add_subcommand("oracle-check", "tiny-model oracle test battery");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_o);
        if (train->parsed()) return cmd_train(train_o, model_out);
        if (approx->parsed()) return cmd_approximate(approx_o, model_in);
        if (eval->parsed())
            return cmd_evaluate(eval_o, model_in, eval_noise, eval_noise_seed);
        if (synth->parsed()) {
            axdbn::write_synth_idx(synth_dir, synth_train, synth_test, synth_seed);
            std::cout << "synthetic IDX files written to " << synth_dir << "\n";
            return 0;
        }
        if (oracle->parsed()) return cmd_oracle_check();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
