#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "data.hpp"
#include "dbn.hpp"
#include "fixed_point.hpp"
#include "matrix.hpp"
#include "parallel.hpp"
#include "quantize.hpp"
#include "rng.hpp"

namespace axdbn {

struct AxConfig {
    double tolerance = 0.05;  // absolute accuracy-fraction drop allowed
    std::vector<int> levels = standard_levels();
    double prune_fraction = 0.10;  // share of eligible neurons dropped per iteration
    TrainConfig retrain{0.02, 1, 50, 1, 0.5, 1e-4, 0};
    std::size_t max_iterations = 60;
};

inline void validate(const AxConfig& cfg) {
    require(cfg.tolerance > 0.0, "ax: tolerance must be > 0");
    require(!cfg.levels.empty(), "ax: empty level set");
    require(cfg.levels.back() > 0, "ax: maximum level must be nonzero");
    for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
        require(valid_level(cfg.levels[i]), "ax: unknown bitwidth level");
        if (i > 0)
            require(cfg.levels[i] > cfg.levels[i - 1], "ax: levels must ascend");
    }
    require(cfg.prune_fraction > 0.0 && cfg.prune_fraction <= 1.0,
            "ax: prune_fraction must be in (0,1]");
    validate(cfg.retrain);
}

// The next lower level available in the configured space, if any.
inline std::optional<int> next_lower_level(const std::vector<int>& levels,
                                           int current) {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (levels[i] == current)
            return i == 0 ? std::nullopt : std::optional<int>(levels[i - 1]);
    return std::nullopt;
}

struct AxIterationRecord {
    std::size_t iteration = 0;
    double accuracy = 0.0;        // eval accuracy of the attempted state
    double avg_bits = 0.0;        // avg bitwidth of the attempted map
    std::size_t neurons_changed = 0;
    bool accepted = false;
    std::vector<int> levels_after;  // per-neuron levels after accept/revert,
                                    // in all_neurons(arch) order
};

struct ApproxResult {
    BitwidthMap map;
    DbnModel model;  // retrained full-precision parameters backing the map
    double br_accuracy = 0.0;
    double fp_accuracy = 0.0;
    double avg_bits = 0.0;
    std::vector<AxIterationRecord> history;
    bool tolerance_met = false;
};

// Uniform bitwidth reduction: descend the nonzero levels from the maximum,
// quantizing every neuron uniformly (no retraining), and return the lowest
// level whose eval accuracy stays within tolerance of the full-precision
// accuracy. If even the maximum level violates, that level is returned and
// the caller sees tolerance_met = false downstream.
inline std::pair<int, BitwidthMap> uniform_reduce(const DbnModel& model,
                                                  const Dataset& eval_set,
                                                  const AxConfig& cfg,
                                                  double fp_accuracy) {
    validate(cfg);
    require(eval_set.labeled() && eval_set.size() > 0,
            "uniform_reduce: labeled eval set required");
    std::vector<int> nonzero;
    for (int l : cfg.levels)
        if (l > 0) nonzero.push_back(l);
    int chosen = nonzero.back();
    for (std::size_t i = nonzero.size(); i-- > 0;) {
        BitwidthMap map = BitwidthMap::uniform(model.arch.layer_sizes,
                                               model.arch.num_classes, nonzero[i]);
        const double acc = accuracy(apply_bitwidth_map(model, map), eval_set);
        if (acc >= fp_accuracy - cfg.tolerance)
            chosen = nonzero[i];
        else
            break;  // first violation stops the descent
    }
    return {chosen, BitwidthMap::uniform(model.arch.layer_sizes,
                                         model.arch.num_classes, chosen)};
}

namespace detail {

// Per-image evaluation state of the quantized base model, cached so a
// one-neuron probe only recomputes that neuron's column and what lies above.
struct AxImageCache {
    std::vector<Vec> acts;  // acts[i] = input to coupling i; acts[0] = x
    Vec top_pre;            // b_hid_j + W_j . acts[L-1] over top hidden units
    Mat terms;              // classes x top-hidden softplus terms
    Vec fe;                 // free energy per class
    int label = 0;
};

inline double ce_from_fe(const Vec& fe, int label) {
    double m = -fe[0];
    for (double f : fe) m = std::max(m, -f);
    double s = 0.0;
    for (double f : fe) s += std::exp(-f - m);
    return m + std::log(s) + fe[static_cast<std::size_t>(label)];
}

inline AxImageCache build_ax_cache(const DbnModel& q, const Vec& x, int label) {
    AxImageCache ic;
    ic.label = label;
    ic.acts = propagate_all(q, x);
    const DrbmParams& top = q.top;
    ic.top_pre = hidden_pre(top, ic.acts.back());
    ic.terms = Mat(top.classes(), top.hidden());
    ic.fe.assign(top.classes(), 0.0);
    for (std::size_t c = 0; c < top.classes(); ++c) {
        const double* wc_row = top.wc.row(c);
        double fc = -top.b_cls[c];
        for (std::size_t j = 0; j < top.hidden(); ++j) {
            const double t = softplus(ic.top_pre[j] + wc_row[j]);
            ic.terms(c, j) = t;
            fc -= t;
        }
        ic.fe[c] = fc;
    }
    return ic;
}

// The probe's own parameters, quantized from the shadow model at the target
// level. Empty column means the neuron is pruned by the probe.
struct AxProbe {
    NeuronId id;
    int new_level = 0;
    Vec col;
    double bias = 0.0;
};

inline AxProbe make_probe(const DbnModel& shadow, const BitwidthMap& map,
                          const NeuronId& id, int new_level) {
    AxProbe pp{id, new_level, {}, 0.0};
    if (new_level == 0) return pp;
    const FixedPointFormat fmt = format_for_level(new_level);
    if (id.layer == shadow.num_hidden_layers()) {
        const DrbmParams& top = shadow.top;
        pp.col.resize(top.hidden());
        const double* row = top.wc.row(id.index);
        // entries toward pruned top-hidden neurons stay zeroed in the probe,
        // exactly as apply_bitwidth_map would leave them
        for (std::size_t j = 0; j < top.hidden(); ++j)
            pp.col[j] = map.hidden.back()[j] == 0 ? 0.0 : quantize_value(row[j], fmt);
        pp.bias = quantize_value(top.b_cls[id.index], fmt);
        return pp;
    }
    const bool is_top = id.layer + 1 == shadow.num_hidden_layers();
    const Mat& w = is_top ? shadow.top.w : shadow.lower[id.layer].w;
    const Vec& b = is_top ? shadow.top.b_hid : shadow.lower[id.layer].b_hid;
    pp.col.resize(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r)
        pp.col[r] = quantize_value(w(r, id.index), fmt);
    // rows coming out of pruned neurons in the layer below are zero in the
    // quantized model and stay zero in the probe
    if (id.layer >= 1)
        for (std::size_t r = 0; r < w.rows; ++r)
            if (map.hidden[id.layer - 1][r] == 0) pp.col[r] = 0.0;
    pp.bias = quantize_value(b[id.index], fmt);
    return pp;
}

// Cross-entropy of one eval image with the probe applied on top of the
// quantized base model q.
inline double probe_ce(const DbnModel& q, const AxImageCache& ic, const AxProbe& pp) {
    const DrbmParams& top = q.top;
    const std::size_t L = q.num_hidden_layers();
    const std::size_t C = top.classes(), H = top.hidden();
    const double kLn2 = 0.6931471805599453;

    if (pp.id.layer == L) {  // class neuron: only its own free energy moves
        const std::size_t c = pp.id.index;
        double fc;
        if (pp.new_level == 0) {
            fc = 0.0;
            for (std::size_t j = 0; j < H; ++j) fc -= softplus(ic.top_pre[j]);
        } else {
            fc = -pp.bias;
            for (std::size_t j = 0; j < H; ++j)
                fc -= softplus(ic.top_pre[j] + pp.col[j]);
        }
        Vec fe = ic.fe;
        fe[c] = fc;
        return ce_from_fe(fe, ic.label);
    }

    if (pp.id.layer == L - 1) {  // top hidden neuron: one term per class moves
        const std::size_t j = pp.id.index;
        double s_new = 0.0;
        if (pp.new_level != 0) {
            s_new = pp.bias;
            const Vec& a = ic.acts[L - 1];
            for (std::size_t v = 0; v < a.size(); ++v) s_new += pp.col[v] * a[v];
        }
        Vec fe = ic.fe;
        for (std::size_t c = 0; c < C; ++c) {
            // pruning zeroes the Wc column too, so the new term is ln 2
            const double term_new =
                pp.new_level == 0 ? kLn2 : softplus(s_new + top.wc(c, j));
            fe[c] += ic.terms(c, j) - term_new;
        }
        return ce_from_fe(fe, ic.label);
    }

    // lower hidden neuron: recompute its activation, then everything above.
    // A pruned neuron contributes 0 downstream (its outgoing row would be
    // zeroed), which equals feeding activation 0 through the unchanged row.
    const std::size_t l = pp.id.layer, j = pp.id.index;
    double a_eff = 0.0;
    if (pp.new_level != 0) {
        double z = pp.bias;
        const Vec& a_in = ic.acts[l];
        for (std::size_t v = 0; v < a_in.size(); ++v) z += pp.col[v] * a_in[v];
        a_eff = sigmoid(z);
    }
    if (l + 1 == L - 1) {  // feeds the top coupling: shift top_pre by a row
        const double delta = a_eff - ic.acts[l + 1][j];
        const double* row = top.w.row(j);
        Vec fe(C);
        Vec tp = ic.top_pre;
        for (std::size_t m = 0; m < H; ++m) tp[m] += row[m] * delta;
        for (std::size_t c = 0; c < C; ++c) {
            const double* wc_row = top.wc.row(c);
            double fc = -top.b_cls[c];
            for (std::size_t m = 0; m < H; ++m) fc -= softplus(tp[m] + wc_row[m]);
            fe[c] = fc;
        }
        return ce_from_fe(fe, ic.label);
    }
    // deeper stacks: full forward from the modified activation vector
    Vec cur = ic.acts[l + 1];
    cur[j] = a_eff;
    for (std::size_t i = l + 1; i + 1 < L; ++i)
        cur = hidden_activation(q.lower[i], cur);
    return ce_from_fe(free_energies(top, cur), ic.label);
}

}  // namespace detail

struct CriticalityEntry {
    std::size_t ordinal = 0;  // position in all_neurons(arch)
    NeuronId id;
    double delta = 0.0;  // eval cross-entropy increase when dropped one level
};

// Ranks neurons least-critical first: delta_i is the eval-set cross-entropy
// of the model with only neuron i dropped to its next-lower level, minus the
// cross-entropy under the current map. Probes are one-at-a-time against an
// immutable quantized base; neurons without a lower level (or outside the
// eligibility mask) are excluded. Ties order by neuron id.
inline std::vector<CriticalityEntry> criticality_rank(
    const DbnModel& shadow, const BitwidthMap& map, const std::vector<int>& levels,
    const Dataset& eval_set, const std::vector<char>* eligible_mask = nullptr) {
    check_map_shape(shadow, map);
    require(eval_set.labeled() && eval_set.size() > 0,
            "criticality_rank: labeled eval set required");

    const std::vector<NeuronId> ids = all_neurons(shadow.arch);
    std::vector<std::size_t> probe_ordinals;
    std::vector<int> probe_targets;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (eligible_mask && !(*eligible_mask)[k]) continue;
        const auto lower = next_lower_level(levels, level_of(map, ids[k]));
        if (!lower) continue;
        probe_ordinals.push_back(k);
        probe_targets.push_back(*lower);
    }
    require(!probe_ordinals.empty(), "criticality_rank: no eligible neurons");

    const DbnModel q = apply_bitwidth_map(shadow, map);
    std::vector<detail::AxImageCache> caches(eval_set.size());
    parallel_for(eval_set.size(), [&](std::size_t i) {
        caches[i] = detail::build_ax_cache(q, eval_set.images[i], eval_set.labels[i]);
    });
    double base_ce = 0.0;
    for (const auto& ic : caches) base_ce += detail::ce_from_fe(ic.fe, ic.label);
    base_ce /= static_cast<double>(caches.size());

    std::vector<double> deltas(probe_ordinals.size());
    parallel_for(probe_ordinals.size(), [&](std::size_t k) {
        const detail::AxProbe pp =
            detail::make_probe(shadow, map, ids[probe_ordinals[k]], probe_targets[k]);
        double s = 0.0;
        for (const auto& ic : caches) s += detail::probe_ce(q, ic, pp);
        deltas[k] = s / static_cast<double>(caches.size()) - base_ce;
    });

    std::vector<CriticalityEntry> out(probe_ordinals.size());
    for (std::size_t k = 0; k < probe_ordinals.size(); ++k)
        out[k] = {probe_ordinals[k], ids[probe_ordinals[k]], deltas[k]};
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.delta != b.delta) return a.delta < b.delta;
        return a.ordinal < b.ordinal;
    });
    return out;
}

// Quantization-aware retraining under the fixed map: gradients are computed
// on the quantized forward model, updates go to the full-precision shadow
// parameters, and quantization is re-applied after every update. Level-0
// neurons stay at zero throughout.
inline void qat_retrain(DbnModel& shadow, const BitwidthMap& map,
                        const Dataset& labeled, const Dataset& unlabeled,
                        const DbnTrainConfig& objective_cfg,
                        const TrainConfig& rcfg, Rng& rng) {
    check_map_shape(shadow, map);
    validate(rcfg);
    if (rcfg.epochs == 0 || labeled.size() == 0) return;
    const std::size_t L = shadow.num_hidden_layers();
    DbnModel q = apply_bitwidth_map(shadow, map);

    std::vector<Vec> acts;
    acts.reserve(labeled.size() + unlabeled.size());
    for (const Vec& x : labeled.images) acts.push_back(x);
    for (const Vec& x : unlabeled.images) acts.push_back(x);

    for (std::size_t l = 0; l + 1 < L; ++l) {
        RbmParams& sp = shadow.lower[l];
        RbmGrad vel = RbmGrad::zeros(sp.visible(), sp.hidden());
        for (std::size_t epoch = 0; epoch < rcfg.epochs; ++epoch) {
            std::vector<std::size_t> order = rng.permutation(acts.size());
            for (std::size_t start = 0; start < order.size(); start += rcfg.batch_size) {
                const std::size_t end = std::min(order.size(), start + rcfg.batch_size);
                std::vector<Vec> batch;
                batch.reserve(end - start);
                for (std::size_t i = start; i < end; ++i) batch.push_back(acts[order[i]]);
                RbmGrad g = cd_gradient(q.lower[l], batch, rcfg.cd_k, rng);
                for (std::size_t i = 0; i < g.w.data.size(); ++i) {
                    vel.w.data[i] =
                        rcfg.momentum * vel.w.data[i] -
                        rcfg.learning_rate * (g.w.data[i] + rcfg.weight_decay * sp.w.data[i]);
                    sp.w.data[i] += vel.w.data[i];
                }
                for (std::size_t i = 0; i < sp.b_vis.size(); ++i) {
                    vel.b_vis[i] =
                        rcfg.momentum * vel.b_vis[i] -
                        rcfg.learning_rate * (g.b_vis[i] + rcfg.bias_decay * sp.b_vis[i]);
                    sp.b_vis[i] += vel.b_vis[i];
                }
                for (std::size_t i = 0; i < sp.b_hid.size(); ++i) {
                    vel.b_hid[i] =
                        rcfg.momentum * vel.b_hid[i] -
                        rcfg.learning_rate * (g.b_hid[i] + rcfg.bias_decay * sp.b_hid[i]);
                    sp.b_hid[i] += vel.b_hid[i];
                }
                requantize_coupling(q, shadow, map, l);
            }
        }
        std::vector<Vec> next(acts.size());
        parallel_for(acts.size(), [&](std::size_t i) {
            next[i] = hidden_activation(q.lower[l], acts[i]);
        });
        acts = std::move(next);
    }

    std::vector<Vec> labeled_feats(acts.begin(),
                                   acts.begin() + std::ptrdiff_t(labeled.size()));
    std::vector<Vec> unlabeled_feats(acts.begin() + std::ptrdiff_t(labeled.size()),
                                     acts.end());
    train_top_drbm(shadow.top, labeled_feats, labeled.labels, unlabeled_feats,
                   objective_cfg.objective, objective_cfg.ssl, rcfg, rng, &q.top,
                   [&](DrbmParams&) { requantize_coupling(q, shadow, map, L - 1); });
}

// The full AX loop: record the full-precision accuracy, uniform-reduce to a
// starting map, then repeatedly rank eligible neurons by criticality, drop
// the least critical fraction one level, retrain quantization-aware, and
// accept the iteration only if eval accuracy stays within tolerance;
// otherwise the exact prior state is restored and the dropped neurons are
// frozen. Terminates when nothing eligible remains or max_iterations hits.
inline ApproxResult ax_dbn(const DbnModel& trained, const Dataset& labeled,
                           const Dataset& unlabeled, const Dataset& eval_set,
                           const AxConfig& cfg, const DbnTrainConfig& train_cfg) {
    validate(cfg);
    require(labeled.labeled() && labeled.size() > 0,
            "ax_dbn: labeled training data required");
    require(eval_set.labeled() && eval_set.size() > 0,
            "ax_dbn: labeled eval set required");

    const std::vector<NeuronId> ids = all_neurons(trained.arch);
    ApproxResult res;
    res.fp_accuracy = accuracy(trained, eval_set);
    const double floor_acc = res.fp_accuracy - cfg.tolerance;

    auto [start_level, map] = uniform_reduce(trained, eval_set, cfg, res.fp_accuracy);
    (void)start_level;
    DbnModel shadow = trained;

    auto snapshot_levels = [&ids](const BitwidthMap& m) {
        std::vector<int> ls(ids.size());
        for (std::size_t k = 0; k < ids.size(); ++k) ls[k] = level_of(m, ids[k]);
        return ls;
    };

    double cur_acc = accuracy(apply_bitwidth_map(shadow, map), eval_set);
    res.history.push_back({0, cur_acc, avg_bitwidth(map), ids.size(),
                           cur_acc >= floor_acc, snapshot_levels(map)});

    BitwidthMap best_map = map;
    DbnModel best_shadow = shadow;
    double best_acc = cur_acc;

    std::vector<char> frozen(ids.size(), 0);
    Rng retrain_rng(cfg.retrain.seed);

    for (std::size_t iter = 1; iter <= cfg.max_iterations; ++iter) {
        std::vector<char> eligible(ids.size(), 0);
        std::size_t n_eligible = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (frozen[k]) continue;
            if (next_lower_level(cfg.levels, level_of(map, ids[k]))) {
                eligible[k] = 1;
                ++n_eligible;
            }
        }
        if (n_eligible == 0) break;

        const auto ranking =
            criticality_rank(shadow, map, cfg.levels, eval_set, &eligible);
        const auto n_drop = std::min<std::size_t>(
            ranking.size(), static_cast<std::size_t>(std::ceil(
                                cfg.prune_fraction * double(ranking.size()))));

        const BitwidthMap prev_map = map;
        const DbnModel prev_shadow = shadow;

        std::vector<std::size_t> dropped;
        dropped.reserve(n_drop);
        for (std::size_t d = 0; d < n_drop; ++d) {
            const auto& e = ranking[d];
            set_level(map, e.id, *next_lower_level(cfg.levels, level_of(map, e.id)));
            dropped.push_back(e.ordinal);
        }
        const double attempted_bits = avg_bitwidth(map);

        qat_retrain(shadow, map, labeled, unlabeled, train_cfg, cfg.retrain,
                    retrain_rng);
        const double acc = accuracy(apply_bitwidth_map(shadow, map), eval_set);
        const bool accepted = acc >= floor_acc;
        if (accepted) {
            cur_acc = acc;
            best_map = map;
            best_shadow = shadow;
            best_acc = acc;
        } else {
            map = prev_map;
            shadow = prev_shadow;
            for (std::size_t k : dropped) frozen[k] = 1;
        }
        res.history.push_back({iter, acc, attempted_bits, n_drop, accepted,
                               snapshot_levels(map)});
    }

    res.map = best_map;
    res.model = std::move(best_shadow);
    res.br_accuracy = best_acc;
    res.avg_bits = avg_bitwidth(best_map);
    res.tolerance_met = best_acc >= floor_acc;
    return res;
}

}  // namespace axdbn
