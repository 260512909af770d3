#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "axdbn/dbn.hpp"
#include "axdbn/quantize.hpp"
#include "axdbn/synth.hpp"
#include "oracle_helpers.hpp"

using namespace axdbn;

namespace {

DbnModel small_random_model(std::uint64_t seed) {
    Rng rng(seed);
    DbnModel m = init_dbn({8, {4, 3}, 3}, seed);
    for (RbmParams& p : m.lower) {
        for (double& x : p.w.data) x = rng.uniform(-1.2, 1.2);
        for (double& x : p.b_hid) x = rng.uniform(-0.5, 0.5);
    }
    for (double& x : m.top.w.data) x = rng.uniform(-1.2, 1.2);
    for (double& x : m.top.wc.data) x = rng.uniform(-1.2, 1.2);
    for (double& x : m.top.b_hid) x = rng.uniform(-0.5, 0.5);
    for (double& x : m.top.b_cls) x = rng.uniform(-0.5, 0.5);
    return m;
}

}  // namespace

TEST_CASE("neuron enumeration covers hidden layers then classes") {
    Architecture arch{8, {4, 3}, 3};
    const auto ids = all_neurons(arch);
    REQUIRE(ids.size() == 10);
    CHECK(ids.front() == NeuronId{0, 0});
    CHECK(ids[4] == NeuronId{1, 0});
    CHECK(ids.back() == NeuronId{2, 2});

    BitwidthMap map = BitwidthMap::uniform(arch.layer_sizes, arch.num_classes, 8);
    CHECK(level_of(map, {1, 2}) == 8);
    set_level(map, {1, 2}, 4);
    CHECK(level_of(map, {1, 2}) == 4);
    CHECK(map.hidden[1][2] == 4);
    set_level(map, {2, 0}, 0);
    CHECK(map.cls[0] == 0);
}

TEST_CASE("64-bit quantization is an exact passthrough for in-range params") {
    DbnModel m = small_random_model(1);
    BitwidthMap map = BitwidthMap::uniform(m.arch.layer_sizes, m.arch.num_classes, 64);
    DbnModel q = apply_bitwidth_map(m, map);
    CHECK(q == m);

    Dataset probe = synth_digits(100, 2);
    Architecture arch{784, {10, 6}, 10};
    Rng rng(3);
    DbnModel big = init_dbn(arch, 4);
    for (RbmParams& p : big.lower)
        for (double& x : p.w.data) x = rng.uniform(-1.0, 1.0);
    for (double& x : big.top.w.data) x = rng.uniform(-1.0, 1.0);
    for (double& x : big.top.wc.data) x = rng.uniform(-1.0, 1.0);
    BitwidthMap map64 =
        BitwidthMap::uniform(arch.layer_sizes, arch.num_classes, 64);
    DbnModel q64 = apply_bitwidth_map(big, map64);
    for (std::size_t i = 0; i < probe.size(); ++i)
        CHECK(classify(big, probe.images[i]) == classify(q64, probe.images[i]));
}

TEST_CASE("all-pruned map sends every input to class 0") {
    DbnModel m = small_random_model(5);
    BitwidthMap map = BitwidthMap::uniform(m.arch.layer_sizes, m.arch.num_classes, 0);
    DbnModel q = apply_bitwidth_map(m, map);
    Rng rng(6);
    for (int t = 0; t < 10; ++t) {
        Vec x(8);
        for (double& xi : x) xi = rng.uniform();
        Vec fe = free_energies(q.top, propagate(q, x));
        for (double f : fe) CHECK(f == fe[0]);
        CHECK(classify(q, x) == 0);
    }
    CHECK(avg_bitwidth(map) == 0.0);
}

TEST_CASE("single-neuron quantization touches only that neuron") {
    DbnModel m = small_random_model(7);
    for (std::size_t r = 0; r < m.top.w.rows; ++r) m.top.w(r, 1) = 0.3;
    m.top.b_hid[1] = 0.3;

    BitwidthMap map = BitwidthMap::uniform(m.arch.layer_sizes, m.arch.num_classes, 64);
    set_level(map, {1, 1}, 4);  // top hidden neuron 1 at Q(2.2)
    DbnModel q = apply_bitwidth_map(m, map);

    for (std::size_t r = 0; r < m.top.w.rows; ++r)
        CHECK(q.top.w(r, 1) == 0.25);
    CHECK(q.top.b_hid[1] == 0.25);
    // everything else is untouched
    DbnModel diff = q;
    for (std::size_t r = 0; r < m.top.w.rows; ++r) diff.top.w(r, 1) = m.top.w(r, 1);
    diff.top.b_hid[1] = m.top.b_hid[1];
    CHECK(diff == m);
    // source model not modified
    CHECK(m.top.w(0, 1) == 0.3);
}

TEST_CASE("pruning removes the neuron's influence completely") {
    DbnModel m = small_random_model(8);
    BitwidthMap map = BitwidthMap::uniform(m.arch.layer_sizes, m.arch.num_classes, 64);
    set_level(map, {0, 2}, 0);  // prune a first-layer neuron
    DbnModel q = apply_bitwidth_map(m, map);

    for (std::size_t r = 0; r < q.lower[0].w.rows; ++r) CHECK(q.lower[0].w(r, 2) == 0.0);
    CHECK(q.lower[0].b_hid[2] == 0.0);
    for (std::size_t c = 0; c < q.top.w.cols; ++c) CHECK(q.top.w(2, c) == 0.0);

    // varying what feeds the pruned neuron cannot change any output
    DbnModel m2 = m;
    for (std::size_t r = 0; r < m2.lower[0].w.rows; ++r) m2.lower[0].w(r, 2) += 5.0;
    m2.lower[0].b_hid[2] -= 3.0;
    DbnModel q2 = apply_bitwidth_map(m2, map);
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
        Vec x(8);
        for (double& xi : x) xi = rng.uniform();
        CHECK(free_energies(q.top, propagate(q, x)) ==
              free_energies(q2.top, propagate(q2, x)));
    }

    // pruning a top hidden neuron zeroes its Wc column as well
    BitwidthMap map_top = map;
    set_level(map_top, {0, 2}, 64);
    set_level(map_top, {1, 0}, 0);
    DbnModel qt = apply_bitwidth_map(m, map_top);
    for (std::size_t c = 0; c < qt.top.wc.rows; ++c) CHECK(qt.top.wc(c, 0) == 0.0);

    // pruning a class neuron zeroes its Wc row and bias
    BitwidthMap map_cls = map;
    set_level(map_cls, {0, 2}, 64);
    set_level(map_cls, {2, 1}, 0);
    DbnModel qc = apply_bitwidth_map(m, map_cls);
    for (std::size_t j = 0; j < qc.top.wc.cols; ++j) CHECK(qc.top.wc(1, j) == 0.0);
    CHECK(qc.top.b_cls[1] == 0.0);
}

TEST_CASE("max-level quantization moves parameters by at most one step") {
    DbnModel m = small_random_model(11);
    const int max_level = standard_levels().back();
    const double step = format_for_level(max_level).step();
    BitwidthMap map =
        BitwidthMap::uniform(m.arch.layer_sizes, m.arch.num_classes, max_level);
    DbnModel q = apply_bitwidth_map(m, map);
    auto check_mat = [&](const Mat& a, const Mat& b) {
        for (std::size_t i = 0; i < a.data.size(); ++i)
            CHECK(std::fabs(a.data[i] - b.data[i]) <= step);
    };
    check_mat(m.top.w, q.top.w);
    check_mat(m.top.wc, q.top.wc);
    for (std::size_t l = 0; l < m.lower.size(); ++l)
        check_mat(m.lower[l].w, q.lower[l].w);
}

TEST_CASE("map shape mismatch is rejected") {
    DbnModel m = small_random_model(10);
    BitwidthMap bad = BitwidthMap::uniform({4}, 3, 8);
    CHECK_THROWS(apply_bitwidth_map(m, bad));
    BitwidthMap bad2 = BitwidthMap::uniform({4, 3}, 2, 8);
    CHECK_THROWS(apply_bitwidth_map(m, bad2));
}
