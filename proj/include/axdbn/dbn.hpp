#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "data.hpp"
#include "drbm.hpp"
#include "matrix.hpp"
#include "parallel.hpp"
#include "rbm.hpp"
#include "rng.hpp"

namespace axdbn {

struct Architecture {
    std::size_t visible_size = 784;
    std::vector<std::size_t> layer_sizes;  // hidden widths, e.g. {200, 100}
    std::size_t num_classes = 10;

    bool operator==(const Architecture&) const = default;
};

inline void validate(const Architecture& a) {
    require(!a.layer_sizes.empty(), "architecture needs at least one hidden layer");
    require(a.visible_size >= 1 && a.num_classes >= 2, "bad architecture sizes");
    for (std::size_t s : a.layer_sizes)
        require(s >= 1, "hidden layer sizes must be >= 1");
}

// Stack of RBMs topped by a DRBM carrying the class units. The top DRBM's
// visible side is the last lower layer (or the raw input when there is a
// single hidden layer).
struct DbnModel {
    Architecture arch;
    std::vector<RbmParams> lower;  // couplings 0 .. L-2
    DrbmParams top;                // coupling L-1, with class units

    std::size_t num_hidden_layers() const { return arch.layer_sizes.size(); }

    bool operator==(const DbnModel&) const = default;
};

inline DbnModel init_dbn(const Architecture& arch, std::uint64_t seed) {
    validate(arch);
    Rng rng(seed);
    DbnModel m;
    m.arch = arch;
    std::size_t in = arch.visible_size;
    for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
        m.lower.push_back(init_rbm(in, arch.layer_sizes[l], rng));
        in = arch.layer_sizes[l];
    }
    m.top = init_drbm(in, arch.layer_sizes.back(), arch.num_classes, rng);
    return m;
}

// Deterministic mean-field pass through the lower RBMs; returns every
// activation vector, acts[0] = x and acts[l] = input to coupling l.
inline std::vector<Vec> propagate_all(const DbnModel& m, const Vec& x) {
    require(x.size() == m.arch.visible_size, "propagate: dimension mismatch");
    std::vector<Vec> acts;
    acts.reserve(m.lower.size() + 1);
    acts.push_back(x);
    for (const RbmParams& rbm : m.lower)
        acts.push_back(hidden_activation(rbm, acts.back()));
    return acts;
}

// Input vector to the top DRBM.
inline Vec propagate(const DbnModel& m, const Vec& x) {
    return propagate_all(m, x).back();
}

// argmin over classes of the top free energy; ties break toward the
// smallest class index.
inline int classify(const DbnModel& m, const Vec& x) {
    const Vec f = free_energies(m.top, propagate(m, x));
    std::size_t best = 0;
    for (std::size_t c = 1; c < f.size(); ++c)
        if (f[c] < f[best]) best = c;
    return static_cast<int>(best);
}

inline double accuracy(const DbnModel& m, const Dataset& data) {
    require(data.labeled(), "accuracy: dataset has no labels");
    require(data.size() > 0, "accuracy: empty dataset");
    const double hits = parallel_sum(data.size(), [&](std::size_t i) {
        return classify(m, data.images[i]) == data.labels[i] ? 1.0 : 0.0;
    });
    return hits / static_cast<double>(data.size());
}

// Mean over samples of -log P(label | x), evaluated stably from the free
// energies: -log p_y = logsumexp(-F) + F_y.
inline double cross_entropy(const DbnModel& m, const Dataset& data) {
    require(data.labeled(), "cross_entropy: dataset has no labels");
    require(data.size() > 0, "cross_entropy: empty dataset");
    const double total = parallel_sum(data.size(), [&](std::size_t i) {
        Vec f = free_energies(m.top, propagate(m, data.images[i]));
        const double fy = f[static_cast<std::size_t>(data.labels[i])];
        for (double& v : f) v = -v;
        return log_sum_exp(f) + fy;
    });
    return total / static_cast<double>(data.size());
}

struct DbnTrainConfig {
    std::vector<TrainConfig> layers;  // one per coupling; last entry = top DRBM
    Objective objective = Objective::generative;
    std::optional<SslConfig> ssl;
    std::uint64_t init_seed = 0;
};

namespace detail {

inline void sgd_update(DrbmParams& p, DrbmGrad& vel, const DrbmGrad& g,
                       const TrainConfig& cfg) {
    const double lr = cfg.learning_rate, mom = cfg.momentum, wd = cfg.weight_decay;
    const double bd = cfg.bias_decay;
    for (std::size_t i = 0; i < p.w.data.size(); ++i) {
        vel.w.data[i] = mom * vel.w.data[i] - lr * (g.w.data[i] + wd * p.w.data[i]);
        p.w.data[i] += vel.w.data[i];
    }
    for (std::size_t i = 0; i < p.wc.data.size(); ++i) {
        vel.wc.data[i] = mom * vel.wc.data[i] - lr * (g.wc.data[i] + wd * p.wc.data[i]);
        p.wc.data[i] += vel.wc.data[i];
    }
    for (std::size_t i = 0; i < p.b_vis.size(); ++i) {
        vel.b_vis[i] = mom * vel.b_vis[i] - lr * (g.b_vis[i] + bd * p.b_vis[i]);
        p.b_vis[i] += vel.b_vis[i];
    }
    for (std::size_t i = 0; i < p.b_hid.size(); ++i) {
        vel.b_hid[i] = mom * vel.b_hid[i] - lr * (g.b_hid[i] + bd * p.b_hid[i]);
        p.b_hid[i] += vel.b_hid[i];
    }
    for (std::size_t i = 0; i < p.b_cls.size(); ++i) {
        vel.b_cls[i] = mom * vel.b_cls[i] - lr * (g.b_cls[i] + bd * p.b_cls[i]);
        p.b_cls[i] += vel.b_cls[i];
    }
}

// Draws the gradient for one step of top-DRBM training, choosing between
// the plain supervised objective and the semi-supervised sum.
struct TopBatcher {
    const std::vector<Vec>& labeled_x;
    const std::vector<int>& labeled_y;
    const std::vector<Vec>& unlabeled_x;
    std::vector<std::size_t> unlab_order;
    std::size_t unlab_pos = 0;

    std::vector<Vec> next_unlabeled(std::size_t count, Rng& rng) {
        std::vector<Vec> batch;
        if (unlabeled_x.empty()) return batch;
        batch.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            if (unlab_pos == unlab_order.size()) {
                rng.shuffle(unlab_order);
                unlab_pos = 0;
            }
            batch.push_back(unlabeled_x[unlab_order[unlab_pos++]]);
        }
        return batch;
    }
};

}  // namespace detail

// Trains the top DRBM in place on propagated features. Used both by
// train_greedy and by the quantization-aware retraining loop: when `forward`
// is given, gradients are computed on that (quantized) view while updates go
// to `top`, and `after_update` refreshes the view (straight-through).
inline void train_top_drbm(DrbmParams& top, const std::vector<Vec>& labeled_x,
                           const std::vector<int>& labeled_y,
                           const std::vector<Vec>& unlabeled_x,
                           Objective objective, const std::optional<SslConfig>& ssl,
                           const TrainConfig& cfg, Rng& rng,
                           const DrbmParams* forward = nullptr,
                           const std::function<void(DrbmParams&)>& after_update = {}) {
    validate(cfg);
    if (cfg.epochs == 0 || labeled_x.empty()) return;
    DrbmGrad vel = DrbmGrad::zeros(top.visible(), top.hidden(), top.classes());
    detail::TopBatcher batcher{labeled_x, labeled_y, unlabeled_x, {}, 0};
    const bool use_ssl = ssl.has_value() && !unlabeled_x.empty();
    if (use_ssl) {
        batcher.unlab_order.resize(unlabeled_x.size());
        for (std::size_t i = 0; i < unlabeled_x.size(); ++i) batcher.unlab_order[i] = i;
        rng.shuffle(batcher.unlab_order);
    }

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = rng.permutation(labeled_x.size());
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<Vec> bx;
            std::vector<int> by;
            bx.reserve(end - start);
            by.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                bx.push_back(labeled_x[order[i]]);
                by.push_back(labeled_y[order[i]]);
            }
            const DrbmParams& fwd = forward ? *forward : top;
            DrbmGrad g = DrbmGrad::zeros(top.visible(), top.hidden(), top.classes());
            if (use_ssl) {
                std::vector<Vec> bu = batcher.next_unlabeled(end - start, rng);
                g = ssl_gradient(fwd, bx, by, bu, *ssl, cfg.cd_k, rng);
            } else if (objective == Objective::discriminative) {
                g = disc_gradient(fwd, bx, by);
            } else {
                g = gen_gradient(fwd, bx, by, cfg.cd_k, rng);
            }
            detail::sgd_update(top, vel, g, cfg);
            if (after_update) after_update(top);
        }
    }
}

// Greedy layerwise training: each lower RBM is trained generatively (CD) on
// the propagated activations of all available images, then the top DRBM is
// trained on (propagated activation, label) pairs under the configured
// objective, with the beta-weighted unsupervised term when ssl is set.
inline DbnModel train_greedy(const Architecture& arch, const Dataset& labeled,
                             const Dataset& unlabeled, const DbnTrainConfig& cfg) {
    validate(arch);
    require(labeled.labeled() && labeled.size() > 0,
            "train_greedy: labeled dataset required");
    require(cfg.layers.size() == arch.layer_sizes.size(),
            "train_greedy: one TrainConfig per coupling required");

    DbnModel model = init_dbn(arch, cfg.init_seed);

    std::vector<Vec> acts;
    acts.reserve(labeled.size() + unlabeled.size());
    for (const Vec& x : labeled.images) acts.push_back(x);
    for (const Vec& x : unlabeled.images) acts.push_back(x);

    for (std::size_t l = 0; l < model.lower.size(); ++l) {
        model.lower[l] = train_rbm(model.lower[l], acts, cfg.layers[l]);
        std::vector<Vec> next(acts.size());
        parallel_for(acts.size(), [&](std::size_t i) {
            next[i] = hidden_activation(model.lower[l], acts[i]);
        });
        acts = std::move(next);
    }

    // acts now holds the top inputs for labeled then unlabeled images
    std::vector<Vec> labeled_feats(acts.begin(),
                                   acts.begin() + std::ptrdiff_t(labeled.size()));
    std::vector<Vec> unlabeled_feats(acts.begin() + std::ptrdiff_t(labeled.size()),
                                     acts.end());
    acts.clear();
    acts.shrink_to_fit();

    const TrainConfig& top_cfg = cfg.layers.back();
    Rng rng(top_cfg.seed);
    train_top_drbm(model.top, labeled_feats, labeled.labels, unlabeled_feats,
                   cfg.objective, cfg.ssl, top_cfg, rng);
    return model;
}

}  // namespace axdbn
