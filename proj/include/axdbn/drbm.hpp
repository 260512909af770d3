#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "matrix.hpp"
#include "rbm.hpp"
#include "rng.hpp"

namespace axdbn {

enum class Objective { generative, discriminative };

// Discriminative RBM: the visible layer is split into inputs x and a one-hot
// class vector c, with E(x,c,h) = -x.b_vis - h.b_hid - c.b_cls - x'Wh - c'Wc h.
struct DrbmParams {
    Mat w;      // visible x hidden
    Mat wc;     // classes x hidden
    Vec b_vis;  // b^x
    Vec b_hid;  // b
    Vec b_cls;  // b^c

    std::size_t visible() const { return b_vis.size(); }
    std::size_t hidden() const { return b_hid.size(); }
    std::size_t classes() const { return b_cls.size(); }

    bool operator==(const DrbmParams&) const = default;
};

struct SslConfig {
    double beta = 0.1;
    Objective objective = Objective::generative;
};

inline DrbmParams init_drbm(std::size_t visible, std::size_t hidden,
                            std::size_t classes, Rng& rng) {
    DrbmParams p;
    p.w = Mat(visible, hidden);
    p.wc = Mat(classes, hidden);
    for (double& x : p.w.data) x = rng.normal(0.0, 0.01);
    for (double& x : p.wc.data) x = rng.normal(0.0, 0.01);
    p.b_vis.assign(visible, 0.0);
    p.b_hid.assign(hidden, 0.0);
    p.b_cls.assign(classes, 0.0);
    return p;
}

inline double energy(const DrbmParams& p, const Vec& x, std::size_t c,
                     const Vec& h) {
    require(x.size() == p.visible() && h.size() == p.hidden(),
            "energy: dimension mismatch");
    require(c < p.classes(), "energy: class index out of range");
    double e = -dot(x, p.b_vis) - dot(h, p.b_hid) - p.b_cls[c];
    for (std::size_t i = 0; i < p.visible(); ++i) {
        if (x[i] == 0.0) continue;
        const double* row = p.w.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < p.hidden(); ++j) s += row[j] * h[j];
        e -= x[i] * s;
    }
    const double* wc_row = p.wc.row(c);
    for (std::size_t j = 0; j < p.hidden(); ++j) e -= wc_row[j] * h[j];
    return e;
}

// Hidden pre-activations shared by every class: t_j = b_hid_j + W_j . x
inline Vec hidden_pre(const DrbmParams& p, const Vec& x) {
    require(x.size() == p.visible(), "hidden_pre: dimension mismatch");
    Vec t = p.b_hid;
    for (std::size_t i = 0; i < p.visible(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = p.w.row(i);
        for (std::size_t j = 0; j < p.hidden(); ++j) t[j] += row[j] * xi;
    }
    return t;
}

inline double free_energy_from_pre(const DrbmParams& p, const Vec& t,
                                   std::size_t c, double vis_term) {
    double f = -vis_term - p.b_cls[c];
    const double* wc_row = p.wc.row(c);
    for (std::size_t j = 0; j < p.hidden(); ++j)
        f -= softplus(t[j] + wc_row[j]);
    return f;
}

// F(x,c) = -x.b_vis - b_cls_c - sum_j softplus(b_hid_j + Wc_cj + W_j . x),
// so that e^{-F(x,c)} = sum_h e^{-E(x,c,h)} exactly. The x.b_vis term is
// constant across classes and cancels out of posteriors and argmins.
inline double free_energy(const DrbmParams& p, const Vec& x, std::size_t c) {
    require(c < p.classes(), "free_energy: class index out of range");
    return free_energy_from_pre(p, hidden_pre(p, x), c, dot(x, p.b_vis));
}

inline Vec free_energies(const DrbmParams& p, const Vec& x) {
    const Vec t = hidden_pre(p, x);
    const double vis_term = dot(x, p.b_vis);
    Vec f(p.classes());
    for (std::size_t c = 0; c < p.classes(); ++c)
        f[c] = free_energy_from_pre(p, t, c, vis_term);
    return f;
}

// softmax over -F, computed with max subtraction
inline Vec posterior_from_free_energies(const Vec& f) {
    Vec p(f.size());
    double lo = f[0];
    for (double v : f) lo = std::min(lo, v);
    double z = 0.0;
    for (std::size_t c = 0; c < f.size(); ++c) {
        p[c] = std::exp(lo - f[c]);
        z += p[c];
    }
    for (double& v : p) v /= z;
    return p;
}

inline Vec class_posterior(const DrbmParams& p, const Vec& x) {
    return posterior_from_free_energies(free_energies(p, x));
}

struct DrbmGrad {
    Mat w;
    Mat wc;
    Vec b_vis;
    Vec b_hid;
    Vec b_cls;

    static DrbmGrad zeros(std::size_t visible, std::size_t hidden,
                          std::size_t classes) {
        return {Mat(visible, hidden), Mat(classes, hidden), Vec(visible, 0.0),
                Vec(hidden, 0.0), Vec(classes, 0.0)};
    }

    DrbmGrad& add_scaled(const DrbmGrad& o, double s) {
        for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] += s * o.w.data[i];
        for (std::size_t i = 0; i < wc.data.size(); ++i) wc.data[i] += s * o.wc.data[i];
        for (std::size_t i = 0; i < b_vis.size(); ++i) b_vis[i] += s * o.b_vis[i];
        for (std::size_t i = 0; i < b_hid.size(); ++i) b_hid[i] += s * o.b_hid[i];
        for (std::size_t i = 0; i < b_cls.size(); ++i) b_cls[i] += s * o.b_cls[i];
        return *this;
    }

    void scale(double s) {
        for (double& x : w.data) x *= s;
        for (double& x : wc.data) x *= s;
        for (double& x : b_vis) x *= s;
        for (double& x : b_hid) x *= s;
        for (double& x : b_cls) x *= s;
    }
};

// Exact gradient of L_disc = -(1/N) sum_n log P(c^n | x^n). No sampling:
// dL/dtheta = (1/N) sum_n [ dF(x,y)/dtheta - sum_c P(c|x) dF(x,c)/dtheta ],
// with dF/dtheta in closed form through sigma_cj = sigmoid(t_j + Wc_cj).
// The b_vis component is identically zero since P(c|x) does not depend on it.
inline DrbmGrad disc_gradient(const DrbmParams& p, const std::vector<Vec>& xs,
                              const std::vector<int>& ys) {
    require(!xs.empty(), "disc_gradient: empty batch");
    require(xs.size() == ys.size(), "disc_gradient: batch size mismatch");
    const std::size_t V = p.visible(), H = p.hidden(), C = p.classes();
    DrbmGrad g = DrbmGrad::zeros(V, H, C);
    Vec sig(C * H);
    Vec hid_mix(H);

    for (std::size_t n = 0; n < xs.size(); ++n) {
        const Vec& x = xs[n];
        const auto y = static_cast<std::size_t>(ys[n]);
        require(y < C, "disc_gradient: label out of range");
        const Vec t = hidden_pre(p, x);
        Vec f(C);
        for (std::size_t c = 0; c < C; ++c) {
            const double* wc_row = p.wc.row(c);
            double fc = -p.b_cls[c];
            for (std::size_t j = 0; j < H; ++j) {
                const double z = t[j] + wc_row[j];
                fc -= softplus(z);
                sig[c * H + j] = sigmoid(z);
            }
            f[c] = fc;
        }
        const Vec post = posterior_from_free_energies(f);

        // hid_mix_j = sum_c p_c sigma_cj - sigma_yj  (coefficient of dF/db_hid)
        for (std::size_t j = 0; j < H; ++j) hid_mix[j] = -sig[y * H + j];
        for (std::size_t c = 0; c < C; ++c) {
            const double pc = post[c];
            for (std::size_t j = 0; j < H; ++j) hid_mix[j] += pc * sig[c * H + j];
            g.b_cls[c] += pc;
            double* wc_row = g.wc.row(c);
            for (std::size_t j = 0; j < H; ++j)
                wc_row[j] += pc * sig[c * H + j];
        }
        g.b_cls[y] -= 1.0;
        {
            double* wc_row = g.wc.row(y);
            for (std::size_t j = 0; j < H; ++j) wc_row[j] -= sig[y * H + j];
        }
        for (std::size_t j = 0; j < H; ++j) g.b_hid[j] += hid_mix[j];
        for (std::size_t i = 0; i < V; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            double* row = g.w.row(i);
            for (std::size_t j = 0; j < H; ++j) row[j] += xi * hid_mix[j];
        }
    }
    g.scale(1.0 / static_cast<double>(xs.size()));
    return g;
}

namespace detail {

// p(h_j = 1 | x, c) = sigmoid(t_j + Wc_cj)
inline Vec hidden_probs_given_class(const DrbmParams& p, const Vec& t,
                                    std::size_t c) {
    Vec ph(p.hidden());
    const double* wc_row = p.wc.row(c);
    for (std::size_t j = 0; j < p.hidden(); ++j)
        ph[j] = sigmoid(t[j] + wc_row[j]);
    return ph;
}

// p(c | h): softmax over b_cls_c + Wc_c . h
inline std::size_t sample_class_given_hidden(const DrbmParams& p, const Vec& h,
                                             Rng& rng) {
    Vec logit(p.classes());
    for (std::size_t c = 0; c < p.classes(); ++c) {
        const double* wc_row = p.wc.row(c);
        double s = p.b_cls[c];
        for (std::size_t j = 0; j < p.hidden(); ++j) s += wc_row[j] * h[j];
        logit[c] = s;
    }
    double m = logit[0];
    for (double v : logit) m = std::max(m, v);
    double z = 0.0;
    for (double& v : logit) {
        v = std::exp(v - m);
        z += v;
    }
    double u = rng.uniform() * z;
    double acc = 0.0;
    for (std::size_t c = 0; c < p.classes(); ++c) {
        acc += logit[c];
        if (u < acc) return c;
    }
    return p.classes() - 1;
}

inline Vec visible_probs_given_hidden(const DrbmParams& p, const Vec& h) {
    Vec pre = p.b_vis;
    for (std::size_t i = 0; i < p.visible(); ++i) {
        const double* row = p.w.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < p.hidden(); ++j) s += row[j] * h[j];
        pre[i] = sigmoid(pre[i] + s);
    }
    return pre;
}

inline void accumulate_joint(DrbmGrad& g, const Vec& x, std::size_t c,
                             const Vec& ph, double sign) {
    const std::size_t V = g.b_vis.size(), H = g.b_hid.size();
    for (std::size_t i = 0; i < V; ++i) {
        const double xi = sign * x[i];
        g.b_vis[i] += xi;
        if (xi == 0.0) continue;
        double* row = g.w.row(i);
        for (std::size_t j = 0; j < H; ++j) row[j] += xi * ph[j];
    }
    double* wc_row = g.wc.row(c);
    for (std::size_t j = 0; j < H; ++j) {
        g.b_hid[j] += sign * ph[j];
        wc_row[j] += sign * ph[j];
    }
    g.b_cls[c] += sign;
}

// Shared CD-k negative phase on the joint (x, c, h). The chain state keeps a
// binary visible vector and a hard class; the class unit is resampled from
// its exact conditional softmax given h, visibles from their conditional.
// Returns the terminal (x_k, c_k) paired with its hidden probabilities.
struct JointState {
    Vec x;
    std::size_t c;
    Vec ph;
};

inline JointState run_joint_chain(const DrbmParams& p, const Vec& x0,
                                  std::size_t c0, std::size_t k, Rng& rng) {
    Vec x = sample_bernoulli(x0, rng);
    std::size_t c = c0;
    for (std::size_t t = 0; t < k; ++t) {
        Vec t_pre = hidden_pre(p, x);
        Vec h = sample_bernoulli(hidden_probs_given_class(p, t_pre, c), rng);
        c = sample_class_given_hidden(p, h, rng);
        x = sample_bernoulli(visible_probs_given_hidden(p, h), rng);
    }
    Vec t_pre = hidden_pre(p, x);
    return {std::move(x), c, hidden_probs_given_class(p, t_pre, c)};
}

}  // namespace detail

// CD-k gradient of L_gen = -(1/N) sum_n log P(x^n, c^n). The positive phase
// uses (x, one-hot c, hidden probabilities); the negative phase is the joint
// chain after k sweeps.
inline DrbmGrad gen_gradient(const DrbmParams& p, const std::vector<Vec>& xs,
                             const std::vector<int>& ys, std::size_t k, Rng& rng) {
    require(!xs.empty(), "gen_gradient: empty batch");
    require(xs.size() == ys.size(), "gen_gradient: batch size mismatch");
    require(k >= 1, "gen_gradient: k must be >= 1");
    DrbmGrad g = DrbmGrad::zeros(p.visible(), p.hidden(), p.classes());
    for (std::size_t n = 0; n < xs.size(); ++n) {
        const Vec& x = xs[n];
        const auto y = static_cast<std::size_t>(ys[n]);
        require(y < p.classes(), "gen_gradient: label out of range");
        Vec t = hidden_pre(p, x);
        Vec ph = detail::hidden_probs_given_class(p, t, y);
        detail::accumulate_joint(g, x, y, ph, -1.0);  // grad = model - data
        detail::JointState neg = detail::run_joint_chain(p, x, y, k, rng);
        detail::accumulate_joint(g, neg.x, neg.c, neg.ph, 1.0);
    }
    g.scale(1.0 / static_cast<double>(xs.size()));
    return g;
}

// CD-k gradient of L_unsup = -(1/U) sum_n log P(x = u^n), the class unit
// treated as latent: the positive phase samples c from the class posterior.
inline DrbmGrad unsup_gradient(const DrbmParams& p, const std::vector<Vec>& xs,
                               std::size_t k, Rng& rng) {
    require(!xs.empty(), "unsup_gradient: empty batch");
    require(k >= 1, "unsup_gradient: k must be >= 1");
    DrbmGrad g = DrbmGrad::zeros(p.visible(), p.hidden(), p.classes());
    for (const Vec& x : xs) {
        Vec t = hidden_pre(p, x);
        Vec f(p.classes());
        for (std::size_t c = 0; c < p.classes(); ++c)
            f[c] = free_energy_from_pre(p, t, c, 0.0);  // shift cancels in the softmax
        Vec post = posterior_from_free_energies(f);
        double u = rng.uniform();
        std::size_t c_pos = p.classes() - 1;
        double acc = 0.0;
        for (std::size_t c = 0; c < p.classes(); ++c) {
            acc += post[c];
            if (u < acc) {
                c_pos = c;
                break;
            }
        }
        Vec ph = detail::hidden_probs_given_class(p, t, c_pos);
        detail::accumulate_joint(g, x, c_pos, ph, -1.0);
        detail::JointState neg = detail::run_joint_chain(p, x, c_pos, k, rng);
        detail::accumulate_joint(g, neg.x, neg.c, neg.ph, 1.0);
    }
    g.scale(1.0 / static_cast<double>(xs.size()));
    return g;
}

// L_ssl = L_{gen|disc}(labeled) + beta * L_unsup(unlabeled); the gradient is
// the componentwise sum. An empty unlabeled batch degrades to the pure
// supervised gradient, an empty labeled batch to beta * unsup.
inline DrbmGrad ssl_gradient(const DrbmParams& p, const std::vector<Vec>& labeled_xs,
                             const std::vector<int>& labeled_ys,
                             const std::vector<Vec>& unlabeled_xs,
                             const SslConfig& cfg, std::size_t k, Rng& rng) {
    require(cfg.beta >= 0.0, "ssl_gradient: beta must be >= 0");
    require(!labeled_xs.empty() || !unlabeled_xs.empty(),
            "ssl_gradient: both batches empty");
    DrbmGrad g = DrbmGrad::zeros(p.visible(), p.hidden(), p.classes());
    if (!labeled_xs.empty()) {
        DrbmGrad sup = cfg.objective == Objective::discriminative
                           ? disc_gradient(p, labeled_xs, labeled_ys)
                           : gen_gradient(p, labeled_xs, labeled_ys, k, rng);
        g.add_scaled(sup, 1.0);
    }
    if (!unlabeled_xs.empty() && cfg.beta > 0.0)
        g.add_scaled(unsup_gradient(p, unlabeled_xs, k, rng), cfg.beta);
    return g;
}

}  // namespace axdbn
