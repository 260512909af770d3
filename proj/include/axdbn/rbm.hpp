#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "matrix.hpp"
#include "rng.hpp"

namespace axdbn {

struct RbmParams {
    Mat w;      // visible x hidden
    Vec b_vis;  // b^x
    Vec b_hid;  // b

    std::size_t visible() const { return b_vis.size(); }
    std::size_t hidden() const { return b_hid.size(); }

    bool operator==(const RbmParams&) const = default;
};

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t epochs = 10;
    std::size_t batch_size = 50;
    std::size_t cd_k = 1;
    double momentum = 0.5;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
    // Decay on bias terms. Nonzero values keep biases inside the fixed-point
    // range the experiments quantize into.
    double bias_decay = 0.0;
};

inline void validate(const TrainConfig& c) {
    require(c.learning_rate > 0.0, "learning_rate must be > 0");
    require(c.cd_k >= 1, "cd_k must be >= 1");
    require(c.batch_size >= 1, "batch_size must be >= 1");
    require(c.momentum >= 0.0 && c.momentum < 1.0, "momentum must be in [0,1)");
    require(c.weight_decay >= 0.0, "weight_decay must be >= 0");
    require(c.bias_decay >= 0.0, "bias_decay must be >= 0");
}

inline RbmParams init_rbm(std::size_t visible, std::size_t hidden, Rng& rng) {
    RbmParams p;
    p.w = Mat(visible, hidden);
    for (double& x : p.w.data) x = rng.normal(0.0, 0.01);
    p.b_vis.assign(visible, 0.0);
    p.b_hid.assign(hidden, 0.0);
    return p;
}

// E(v,h) = -v.b_vis - h.b_hid - v'Wh
inline double rbm_energy(const RbmParams& p, const Vec& v, const Vec& h) {
    require(v.size() == p.visible() && h.size() == p.hidden(),
            "rbm_energy: dimension mismatch");
    double e = -dot(v, p.b_vis) - dot(h, p.b_hid);
    for (std::size_t i = 0; i < p.visible(); ++i) {
        if (v[i] == 0.0) continue;
        const double* row = p.w.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < p.hidden(); ++j) s += row[j] * h[j];
        e -= v[i] * s;
    }
    return e;
}

// sigmoid(b_hid + W'v), elementwise
inline Vec hidden_activation(const RbmParams& p, const Vec& v) {
    require(v.size() == p.visible(), "hidden_activation: dimension mismatch");
    Vec pre = p.b_hid;
    for (std::size_t i = 0; i < p.visible(); ++i) {
        const double x = v[i];
        if (x == 0.0) continue;
        const double* row = p.w.row(i);
        for (std::size_t j = 0; j < p.hidden(); ++j) pre[j] += row[j] * x;
    }
    for (double& z : pre) z = sigmoid(z);
    return pre;
}

// sigmoid(b_vis + Wh), elementwise
inline Vec visible_activation(const RbmParams& p, const Vec& h) {
    require(h.size() == p.hidden(), "visible_activation: dimension mismatch");
    Vec pre = p.b_vis;
    for (std::size_t i = 0; i < p.visible(); ++i) {
        const double* row = p.w.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < p.hidden(); ++j) s += row[j] * h[j];
        pre[i] += s;
    }
    for (double& z : pre) z = sigmoid(z);
    return pre;
}

inline Vec sample_bernoulli(const Vec& probs, Rng& rng) {
    Vec out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
        out[i] = rng.bernoulli(probs[i]) ? 1.0 : 0.0;
    return out;
}

// One alternating Gibbs sweep from a binary visible state:
// h ~ Bernoulli(p(h|v)), then v' ~ Bernoulli(p(v|h)).
inline std::pair<Vec, Vec> gibbs_step(const RbmParams& p, const Vec& v, Rng& rng) {
    Vec h = sample_bernoulli(hidden_activation(p, v), rng);
    Vec v_next = sample_bernoulli(visible_activation(p, h), rng);
    return {std::move(h), std::move(v_next)};
}

struct RbmGrad {
    Mat w;
    Vec b_vis;
    Vec b_hid;

    static RbmGrad zeros(std::size_t visible, std::size_t hidden) {
        return {Mat(visible, hidden), Vec(visible, 0.0), Vec(hidden, 0.0)};
    }
};

// CD-k estimate of the gradient of the mean negative log-likelihood:
// grad_W = -(<v h'>_data - <v h'>_model) / |batch|, likewise for biases.
// The positive phase uses the real-valued data as probabilities together
// with the hidden probabilities; the chain starts from a binary sample of
// the data and the model statistics pair the visible state after k sweeps
// with its hidden probabilities.
inline RbmGrad cd_gradient(const RbmParams& p, const std::vector<Vec>& batch,
                           std::size_t k, Rng& rng) {
    require(!batch.empty(), "cd_gradient: empty batch");
    require(k >= 1, "cd_gradient: k must be >= 1");
    const std::size_t V = p.visible(), H = p.hidden();
    RbmGrad g = RbmGrad::zeros(V, H);

    auto accumulate = [&](const Vec& v, const Vec& ph, double sign) {
        for (std::size_t i = 0; i < V; ++i) {
            const double x = sign * v[i];
            g.b_vis[i] += x;
            if (x == 0.0) continue;
            double* row = g.w.row(i);
            for (std::size_t j = 0; j < H; ++j) row[j] += x * ph[j];
        }
        for (std::size_t j = 0; j < H; ++j) g.b_hid[j] += sign * ph[j];
    };

    for (const Vec& v : batch) {
        require(v.size() == V, "cd_gradient: dimension mismatch");
        Vec ph = hidden_activation(p, v);
        accumulate(v, ph, -1.0);  // data term, negated: grad = model - data

        Vec chain = sample_bernoulli(v, rng);
        for (std::size_t t = 0; t < k; ++t)
            chain = gibbs_step(p, chain, rng).second;
        Vec ph_k = hidden_activation(p, chain);
        accumulate(chain, ph_k, 1.0);
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& x : g.w.data) x *= inv;
    for (double& x : g.b_vis) x *= inv;
    for (double& x : g.b_hid) x *= inv;
    return g;
}

// Minibatch SGD with momentum and weight decay (weights only) on the CD-k
// gradient. Deterministic given config.seed.
inline RbmParams train_rbm(RbmParams params, const std::vector<Vec>& data,
                           const TrainConfig& cfg) {
    validate(cfg);
    if (cfg.epochs == 0 || data.empty()) return params;
    Rng rng(cfg.seed);
    const std::size_t V = params.visible(), H = params.hidden();
    RbmGrad vel = RbmGrad::zeros(V, H);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = rng.permutation(data.size());
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<Vec> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
            RbmGrad g = cd_gradient(params, batch, cfg.cd_k, rng);

            for (std::size_t i = 0; i < g.w.data.size(); ++i) {
                vel.w.data[i] = cfg.momentum * vel.w.data[i] -
                                cfg.learning_rate *
                                    (g.w.data[i] + cfg.weight_decay * params.w.data[i]);
                params.w.data[i] += vel.w.data[i];
            }
            for (std::size_t i = 0; i < V; ++i) {
                vel.b_vis[i] = cfg.momentum * vel.b_vis[i] -
                               cfg.learning_rate *
                                   (g.b_vis[i] + cfg.bias_decay * params.b_vis[i]);
                params.b_vis[i] += vel.b_vis[i];
            }
            for (std::size_t j = 0; j < H; ++j) {
                vel.b_hid[j] = cfg.momentum * vel.b_hid[j] -
                               cfg.learning_rate *
                                   (g.b_hid[j] + cfg.bias_decay * params.b_hid[j]);
                params.b_hid[j] += vel.b_hid[j];
            }
        }
    }
    return params;
}

}  // namespace axdbn
