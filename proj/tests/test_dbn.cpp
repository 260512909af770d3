#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "axdbn/dbn.hpp"
#include "axdbn/enumeration.hpp"
#include "axdbn/synth.hpp"
#include "oracle_helpers.hpp"

using namespace axdbn;

namespace {

DbnModel zero_model(const Architecture& arch) {
    DbnModel m = init_dbn(arch, 0);
    for (RbmParams& p : m.lower)
        for (double& x : p.w.data) x = 0.0;
    for (double& x : m.top.w.data) x = 0.0;
    for (double& x : m.top.wc.data) x = 0.0;
    return m;
}

}  // namespace

TEST_CASE("propagate") {
    // single hidden layer: the input goes straight to the top DRBM
    DbnModel single = init_dbn({6, {3}, 2}, 1);
    Vec x{0.1, 0.9, 0.0, 1.0, 0.4, 0.6};
    CHECK(propagate(single, x) == x);

    // zero lower params: all activations are 0.5
    DbnModel two = zero_model({6, {4, 3}, 2});
    for (double a : propagate(two, x)) CHECK(a == 0.5);

    // stacked layers match hand-chained hidden_activation calls
    Rng rng(2);
    DbnModel m = init_dbn({5, {4, 3}, 2}, 3);
    for (double& w : m.lower[0].w.data) w = rng.uniform(-0.7, 0.7);
    Vec in{0.2, 0.8, 0.5, 0.0, 1.0};
    Vec manual = hidden_activation(m.lower[0], in);
    CHECK(propagate(m, in) == manual);

    CHECK_THROWS(propagate(m, Vec(4, 0.0)));
}

TEST_CASE("classify") {
    DbnModel zero = zero_model({4, {3}, 5});
    CHECK(classify(zero, Vec(4, 0.5)) == 0);  // ties break to class 0

    DbnModel biased = zero;
    biased.top.b_cls.back() = 10.0;
    CHECK(classify(biased, Vec(4, 0.5)) == 4);

    // single-layer model: classification equals the enumeration argmax
    Rng rng(4);
    for (int t = 0; t < 15; ++t) {
        DbnModel m = init_dbn({3, {3}, 3}, 5);
        m.top = oracle::random_drbm(3, 3, 3, rng);
        Vec x = oracle::random_binary(3, rng);
        Vec post = drbm_exact_posterior(m.top, x);
        std::size_t amax = 0;
        for (std::size_t c = 1; c < 3; ++c)
            if (post[c] > post[amax]) amax = c;
        CHECK(std::size_t(classify(m, x)) == amax);
    }
}

TEST_CASE("accuracy and cross_entropy") {
    DbnModel zero = zero_model({4, {3}, 10});
    Dataset d;
    d.num_classes = 10;
    d.images = {Vec(4, 0.2), Vec(4, 0.9)};
    d.labels = {0, 0};  // the tie-break class
    CHECK(accuracy(zero, d) == 1.0);
    CHECK(cross_entropy(zero, d) == doctest::Approx(std::log(10.0)).epsilon(1e-14));

    d.labels = {3, 7};
    CHECK(accuracy(zero, d) == 0.0);

    DbnModel confident = zero;
    confident.top.b_cls[3] = 500.0;
    Dataset one;
    one.num_classes = 10;
    one.images = {Vec(4, 0.5)};
    one.labels = {3};
    CHECK(accuracy(confident, one) == 1.0);
    CHECK(cross_entropy(confident, one) < 1e-6);

    Dataset unlabeled;
    unlabeled.images = d.images;
    CHECK_THROWS(accuracy(zero, unlabeled));
    CHECK_THROWS(cross_entropy(zero, unlabeled));
}

TEST_CASE("cross_entropy matches the enumeration posterior") {
    Rng rng(6);
    DbnModel m = init_dbn({3, {4}, 3}, 7);
    m.top = oracle::random_drbm(3, 4, 3, rng);
    Dataset d;
    d.num_classes = 3;
    for (int n = 0; n < 6; ++n) {
        d.images.push_back(oracle::random_binary(3, rng));
        d.labels.push_back(int(rng.index(3)));
    }
    double manual = 0.0;
    for (std::size_t n = 0; n < d.size(); ++n)
        manual -= std::log(
            drbm_exact_posterior(m.top, d.images[n])[std::size_t(d.labels[n])]);
    manual /= double(d.size());
    CHECK(cross_entropy(m, d) == doctest::Approx(manual).epsilon(1e-10));
}

TEST_CASE("classify agrees with the posterior argmax on stacked models") {
    Rng rng(21);
    for (int t = 0; t < 10; ++t) {
        DbnModel m = init_dbn({6, {5, 4}, 4}, 30 + t);
        for (RbmParams& p : m.lower)
            for (double& x : p.w.data) x = rng.uniform(-1, 1);
        for (double& x : m.top.w.data) x = rng.uniform(-1, 1);
        for (double& x : m.top.wc.data) x = rng.uniform(-1, 1);
        Vec x(6);
        for (double& xi : x) xi = rng.uniform();
        Vec post = class_posterior(m.top, propagate(m, x));
        std::size_t amax = 0;
        for (std::size_t c = 1; c < post.size(); ++c)
            if (post[c] > post[amax]) amax = c;
        CHECK(std::size_t(classify(m, x)) == amax);
    }
}

TEST_CASE("train_greedy basics") {
    Dataset data = synth_digits(300, 11);
    Architecture arch{784, {12, 8}, 10};

    DbnTrainConfig cfg;
    cfg.layers = {TrainConfig{0.05, 0, 50, 1, 0.5, 1e-4, 21},
                  TrainConfig{0.05, 0, 50, 1, 0.5, 1e-4, 22}};
    cfg.objective = Objective::generative;
    cfg.init_seed = 20;

    // zero epochs everywhere: the model equals its seeded initialization
    DbnModel untrained = train_greedy(arch, data, {}, cfg);
    CHECK(untrained == init_dbn(arch, 20));

    // deterministic given seeds
    cfg.layers[0].epochs = 2;
    cfg.layers[1].epochs = 3;
    DbnModel a = train_greedy(arch, data, {}, cfg);
    DbnModel b = train_greedy(arch, data, {}, cfg);
    CHECK(a == b);

    // training moves accuracy well above the 10% chance floor
    Dataset big = synth_digits(2000, 15);
    Dataset test = synth_digits(300, 12);
    Architecture wider{784, {24, 12}, 10};
    DbnTrainConfig strong;
    strong.layers = {TrainConfig{0.05, 10, 50, 1, 0.5, 1e-3, 21},
                     TrainConfig{0.12, 30, 50, 1, 0.5, 1e-4, 22}};
    strong.objective = Objective::discriminative;
    strong.init_seed = 20;
    DbnModel trained = train_greedy(wider, big, {}, strong);
    CHECK(accuracy(trained, test) > 0.5);

    CHECK_THROWS(train_greedy(arch, Dataset{}, {}, cfg));
}

TEST_CASE("appending an identity-like lower RBM roughly preserves classification") {
    Dataset data = synth_digits(300, 13);
    Dataset probe = synth_digits(200, 14);
    Architecture arch{784, {12}, 10};
    DbnTrainConfig cfg;
    cfg.layers = {TrainConfig{0.05, 10, 50, 1, 0.5, 1e-4, 31}};
    cfg.objective = Objective::discriminative;
    cfg.init_seed = 30;
    DbnModel m = train_greedy(arch, data, {}, cfg);

    // sharpening front layer: sigmoid(kappa (x - 0.5)) per pixel
    const double kappa = 300.0;
    DbnModel wrapped = m;
    wrapped.arch.layer_sizes.insert(wrapped.arch.layer_sizes.begin(), 784);
    RbmParams front;
    front.w = Mat(784, 784, 0.0);
    for (std::size_t i = 0; i < 784; ++i) front.w(i, i) = kappa;
    front.b_vis.assign(784, 0.0);
    front.b_hid.assign(784, -kappa / 2);
    wrapped.lower.insert(wrapped.lower.begin(), std::move(front));

    double agree = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i)
        agree += classify(m, probe.images[i]) == classify(wrapped, probe.images[i]);
    agree /= double(probe.size());
    CHECK(agree >= 0.98);
}
