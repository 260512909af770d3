#pragma once

#include <vector>

#include "drbm.hpp"
#include "matrix.hpp"
#include "rbm.hpp"

namespace axdbn {

// Exact oracles over the Boltzmann distribution by brute-force enumeration
// of the binary state space. Only usable for tiny models; every entry point
// checks the enumeration guard and throws for anything larger.

constexpr std::size_t kEnumerationGuard = 24;  // max visible + hidden units

namespace detail {

inline void check_enum_guard(std::size_t visible, std::size_t hidden) {
    require(visible + hidden <= kEnumerationGuard,
            "model too large for exact enumeration");
}

inline Vec bits_to_vec(unsigned mask, std::size_t n) {
    Vec v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = (mask >> i) & 1u ? 1.0 : 0.0;
    return v;
}

}  // namespace detail

// Mean over the data of log P(v), with P defined by E(v,h) and Z computed by
// full enumeration over all binary (v,h).
inline double exact_log_likelihood(const RbmParams& p, const std::vector<Vec>& data) {
    detail::check_enum_guard(p.visible(), p.hidden());
    require(!data.empty(), "exact_log_likelihood: empty data");
    const std::size_t V = p.visible(), H = p.hidden();
    const unsigned nv = 1u << V, nh = 1u << H;

    Vec all_neg_e;
    all_neg_e.reserve(std::size_t(nv) * nh);
    for (unsigned mv = 0; mv < nv; ++mv) {
        const Vec v = detail::bits_to_vec(mv, V);
        for (unsigned mh = 0; mh < nh; ++mh)
            all_neg_e.push_back(-rbm_energy(p, v, detail::bits_to_vec(mh, H)));
    }
    const double log_z = log_sum_exp(all_neg_e);

    double ll = 0.0;
    Vec neg_e(nh);
    for (const Vec& v : data) {
        require(v.size() == V, "exact_log_likelihood: dimension mismatch");
        for (unsigned mh = 0; mh < nh; ++mh)
            neg_e[mh] = -rbm_energy(p, v, detail::bits_to_vec(mh, H));
        ll += log_sum_exp(neg_e) - log_z;
    }
    return ll / static_cast<double>(data.size());
}

// Exact gradient of the mean negative log-likelihood. With
// dE/dW_ij = -v_i h_j this is E_model[v h'] - E_{h|v,data}[v h'],
// and likewise for the biases.
inline RbmGrad exact_gradient(const RbmParams& p, const std::vector<Vec>& data) {
    detail::check_enum_guard(p.visible(), p.hidden());
    require(!data.empty(), "exact_gradient: empty data");
    const std::size_t V = p.visible(), H = p.hidden();
    const unsigned nv = 1u << V, nh = 1u << H;
    RbmGrad g = RbmGrad::zeros(V, H);

    auto accumulate = [&](RbmGrad& acc, const Vec& v, const Vec& h, double wgt) {
        for (std::size_t i = 0; i < V; ++i) {
            acc.b_vis[i] += wgt * v[i];
            if (v[i] == 0.0) continue;
            double* row = acc.w.row(i);
            for (std::size_t j = 0; j < H; ++j) row[j] += wgt * v[i] * h[j];
        }
        for (std::size_t j = 0; j < H; ++j) acc.b_hid[j] += wgt * h[j];
    };

    // model expectation
    Vec all_neg_e;
    all_neg_e.reserve(std::size_t(nv) * nh);
    for (unsigned mv = 0; mv < nv; ++mv) {
        const Vec v = detail::bits_to_vec(mv, V);
        for (unsigned mh = 0; mh < nh; ++mh)
            all_neg_e.push_back(-rbm_energy(p, v, detail::bits_to_vec(mh, H)));
    }
    const double log_z = log_sum_exp(all_neg_e);
    std::size_t idx = 0;
    for (unsigned mv = 0; mv < nv; ++mv) {
        const Vec v = detail::bits_to_vec(mv, V);
        for (unsigned mh = 0; mh < nh; ++mh) {
            const double prob = std::exp(all_neg_e[idx++] - log_z);
            accumulate(g, v, detail::bits_to_vec(mh, H), prob);
        }
    }

    // data expectation of h given v, subtracted
    Vec neg_e(nh);
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (const Vec& v : data) {
        for (unsigned mh = 0; mh < nh; ++mh)
            neg_e[mh] = -rbm_energy(p, v, detail::bits_to_vec(mh, H));
        const double log_u = log_sum_exp(neg_e);
        for (unsigned mh = 0; mh < nh; ++mh) {
            const double prob = std::exp(neg_e[mh] - log_u);
            accumulate(g, v, detail::bits_to_vec(mh, H), -prob * inv_n);
        }
    }
    return g;
}

// ---- DRBM enumeration oracles ----

namespace detail {

inline void accumulate_drbm(DrbmGrad& g, const Vec& x, std::size_t c,
                            const Vec& h, double wgt) {
    const std::size_t V = g.b_vis.size(), H = g.b_hid.size();
    for (std::size_t i = 0; i < V; ++i) {
        g.b_vis[i] += wgt * x[i];
        if (x[i] == 0.0) continue;
        double* row = g.w.row(i);
        for (std::size_t j = 0; j < H; ++j) row[j] += wgt * x[i] * h[j];
    }
    double* wc_row = g.wc.row(c);
    for (std::size_t j = 0; j < H; ++j) {
        g.b_hid[j] += wgt * h[j];
        wc_row[j] += wgt * h[j];
    }
    g.b_cls[c] += wgt;
}

// log Z over all binary x, all classes, all binary h
inline double drbm_log_z(const DrbmParams& p) {
    const std::size_t V = p.visible(), H = p.hidden(), C = p.classes();
    const unsigned nv = 1u << V, nh = 1u << H;
    Vec neg_e;
    neg_e.reserve(std::size_t(nv) * C * nh);
    for (unsigned mv = 0; mv < nv; ++mv) {
        const Vec x = bits_to_vec(mv, V);
        for (std::size_t c = 0; c < C; ++c)
            for (unsigned mh = 0; mh < nh; ++mh)
                neg_e.push_back(-energy(p, x, c, bits_to_vec(mh, H)));
    }
    return log_sum_exp(neg_e);
}

// adds the model expectation E_{x,c,h}[dE/dtheta] with weight `sign`
inline void add_model_expectation(DrbmGrad& g, const DrbmParams& p, double sign) {
    const std::size_t V = p.visible(), H = p.hidden(), C = p.classes();
    const unsigned nv = 1u << V, nh = 1u << H;
    const double log_z = drbm_log_z(p);
    for (unsigned mv = 0; mv < nv; ++mv) {
        const Vec x = bits_to_vec(mv, V);
        for (std::size_t c = 0; c < C; ++c)
            for (unsigned mh = 0; mh < nh; ++mh) {
                const Vec h = bits_to_vec(mh, H);
                const double prob = std::exp(-energy(p, x, c, h) - log_z);
                accumulate_drbm(g, x, c, h, sign * prob);
            }
    }
}

}  // namespace detail

// -mean log P(x,c) with Z by full enumeration
inline double drbm_exact_joint_nll(const DrbmParams& p, const std::vector<Vec>& xs,
                                   const std::vector<int>& ys) {
    detail::check_enum_guard(p.visible(), p.hidden());
    require(!xs.empty() && xs.size() == ys.size(), "joint nll: bad batch");
    const double log_z = detail::drbm_log_z(p);
    const unsigned nh = 1u << p.hidden();
    double nll = 0.0;
    Vec neg_e(nh);
    for (std::size_t n = 0; n < xs.size(); ++n) {
        for (unsigned mh = 0; mh < nh; ++mh)
            neg_e[mh] = -energy(p, xs[n], static_cast<std::size_t>(ys[n]),
                                detail::bits_to_vec(mh, p.hidden()));
        nll -= log_sum_exp(neg_e) - log_z;
    }
    return nll / static_cast<double>(xs.size());
}

inline DrbmGrad drbm_exact_joint_gradient(const DrbmParams& p,
                                          const std::vector<Vec>& xs,
                                          const std::vector<int>& ys) {
    detail::check_enum_guard(p.visible(), p.hidden());
    require(!xs.empty() && xs.size() == ys.size(), "joint gradient: bad batch");
    const std::size_t H = p.hidden();
    const unsigned nh = 1u << H;
    DrbmGrad g = DrbmGrad::zeros(p.visible(), H, p.classes());
    detail::add_model_expectation(g, p, 1.0);

    const double inv_n = 1.0 / static_cast<double>(xs.size());
    Vec neg_e(nh);
    for (std::size_t n = 0; n < xs.size(); ++n) {
        const auto c = static_cast<std::size_t>(ys[n]);
        for (unsigned mh = 0; mh < nh; ++mh)
            neg_e[mh] = -energy(p, xs[n], c, detail::bits_to_vec(mh, H));
        const double log_u = log_sum_exp(neg_e);
        for (unsigned mh = 0; mh < nh; ++mh) {
            const double prob = std::exp(neg_e[mh] - log_u);
            detail::accumulate_drbm(g, xs[n], c, detail::bits_to_vec(mh, H),
                                    -prob * inv_n);
        }
    }
    return g;
}

// -mean log P(x) = -mean log sum_c sum_h e^{-E} / Z
inline double drbm_exact_marginal_nll(const DrbmParams& p,
                                      const std::vector<Vec>& xs) {
    detail::check_enum_guard(p.visible(), p.hidden());
    require(!xs.empty(), "marginal nll: empty batch");
    const double log_z = detail::drbm_log_z(p);
    const std::size_t H = p.hidden(), C = p.classes();
    const unsigned nh = 1u << H;
    double nll = 0.0;
    Vec neg_e;
    neg_e.reserve(C * nh);
    for (const Vec& x : xs) {
        neg_e.clear();
        for (std::size_t c = 0; c < C; ++c)
            for (unsigned mh = 0; mh < nh; ++mh)
                neg_e.push_back(-energy(p, x, c, detail::bits_to_vec(mh, H)));
        nll -= log_sum_exp(neg_e) - log_z;
    }
    return nll / static_cast<double>(xs.size());
}

inline DrbmGrad drbm_exact_marginal_gradient(const DrbmParams& p,
                                             const std::vector<Vec>& xs) {
    detail::check_enum_guard(p.visible(), p.hidden());
    require(!xs.empty(), "marginal gradient: empty batch");
    const std::size_t H = p.hidden(), C = p.classes();
    const unsigned nh = 1u << H;
    DrbmGrad g = DrbmGrad::zeros(p.visible(), H, p.classes());
    detail::add_model_expectation(g, p, 1.0);

    const double inv_n = 1.0 / static_cast<double>(xs.size());
    Vec neg_e(C * nh);
    for (const Vec& x : xs) {
        for (std::size_t c = 0; c < C; ++c)
            for (unsigned mh = 0; mh < nh; ++mh)
                neg_e[c * nh + mh] = -energy(p, x, c, detail::bits_to_vec(mh, H));
        const double log_u = log_sum_exp(neg_e);
        for (std::size_t c = 0; c < C; ++c)
            for (unsigned mh = 0; mh < nh; ++mh) {
                const double prob = std::exp(neg_e[c * nh + mh] - log_u);
                detail::accumulate_drbm(g, x, c, detail::bits_to_vec(mh, H),
                                        -prob * inv_n);
            }
    }
    return g;
}

// P(c|x) by enumeration over (c,h); the independent route checked against
// the free-energy softmax.
inline Vec drbm_exact_posterior(const DrbmParams& p, const Vec& x) {
    detail::check_enum_guard(p.visible(), p.hidden());
    const std::size_t H = p.hidden(), C = p.classes();
    const unsigned nh = 1u << H;
    Vec log_unnorm(C);
    Vec neg_e(nh);
    for (std::size_t c = 0; c < C; ++c) {
        for (unsigned mh = 0; mh < nh; ++mh)
            neg_e[mh] = -energy(p, x, c, detail::bits_to_vec(mh, H));
        log_unnorm[c] = log_sum_exp(neg_e);
    }
    const double total = log_sum_exp(log_unnorm);
    Vec post(C);
    for (std::size_t c = 0; c < C; ++c) post[c] = std::exp(log_unnorm[c] - total);
    return post;
}

}  // namespace axdbn
