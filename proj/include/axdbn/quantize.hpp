#pragma once

#include <vector>

#include "dbn.hpp"
#include "fixed_point.hpp"
#include "matrix.hpp"

namespace axdbn {

// Identifies one quantizable neuron. Hidden layers are numbered 0..L-1
// (layer L-1 = the top DRBM's hidden layer); layer == L addresses the class
// neurons. This is also the serialization order of the bitwidth map.
struct NeuronId {
    std::size_t layer = 0;
    std::size_t index = 0;

    bool operator==(const NeuronId&) const = default;
};

inline std::vector<NeuronId> all_neurons(const Architecture& arch) {
    std::vector<NeuronId> ids;
    for (std::size_t l = 0; l < arch.layer_sizes.size(); ++l)
        for (std::size_t j = 0; j < arch.layer_sizes[l]; ++j) ids.push_back({l, j});
    for (std::size_t c = 0; c < arch.num_classes; ++c)
        ids.push_back({arch.layer_sizes.size(), c});
    return ids;
}

inline int level_of(const BitwidthMap& map, const NeuronId& id) {
    if (id.layer < map.hidden.size()) return map.hidden[id.layer][id.index];
    return map.cls[id.index];
}

inline void set_level(BitwidthMap& map, const NeuronId& id, int level) {
    if (id.layer < map.hidden.size())
        map.hidden[id.layer][id.index] = level;
    else
        map.cls[id.index] = level;
}

inline void check_map_shape(const DbnModel& m, const BitwidthMap& map) {
    require(map.hidden.size() == m.arch.layer_sizes.size(),
            "bitwidth map: layer count mismatch");
    for (std::size_t l = 0; l < map.hidden.size(); ++l)
        require(map.hidden[l].size() == m.arch.layer_sizes[l],
                "bitwidth map: layer width mismatch");
    require(map.cls.size() == m.arch.num_classes,
            "bitwidth map: class count mismatch");
}

namespace detail {

inline void quantize_column(Mat& w, std::size_t col, Vec& bias, int level) {
    if (level == 0) {
        for (std::size_t r = 0; r < w.rows; ++r) w(r, col) = 0.0;
        bias[col] = 0.0;
        return;
    }
    const FixedPointFormat fmt = format_for_level(level);
    for (std::size_t r = 0; r < w.rows; ++r) w(r, col) = quantize_value(w(r, col), fmt);
    bias[col] = quantize_value(bias[col], fmt);
}

inline void zero_row(Mat& w, std::size_t row) {
    double* r = w.row(row);
    for (std::size_t c = 0; c < w.cols; ++c) r[c] = 0.0;
}

}  // namespace detail

// Refreshes coupling l of q (a quantized copy) from the source model:
// incoming columns are quantized per the coupling's hidden-layer levels,
// and outgoing rows of pruned neurons in the layer below are zeroed.
// Coupling indices run 0..L-1 with L-1 = the top DRBM.
inline void requantize_coupling(DbnModel& q, const DbnModel& src,
                                const BitwidthMap& map, std::size_t coupling) {
    const std::size_t L = src.num_hidden_layers();
    if (coupling < L - 1) {
        RbmParams& layer = q.lower[coupling];
        layer = src.lower[coupling];
        for (std::size_t j = 0; j < map.hidden[coupling].size(); ++j)
            detail::quantize_column(layer.w, j, layer.b_hid, map.hidden[coupling][j]);
        if (coupling > 0)
            for (std::size_t j = 0; j < map.hidden[coupling - 1].size(); ++j)
                if (map.hidden[coupling - 1][j] == 0) detail::zero_row(layer.w, j);
        return;
    }

    DrbmParams& top = q.top;
    top = src.top;
    const std::size_t tl = L - 1;  // hidden layer fed by this coupling
    for (std::size_t j = 0; j < map.hidden[tl].size(); ++j)
        detail::quantize_column(top.w, j, top.b_hid, map.hidden[tl][j]);
    if (L >= 2)
        for (std::size_t j = 0; j < map.hidden[tl - 1].size(); ++j)
            if (map.hidden[tl - 1][j] == 0) detail::zero_row(top.w, j);
    for (std::size_t c = 0; c < map.cls.size(); ++c) {
        const int level = map.cls[c];
        if (level == 0) {
            detail::zero_row(top.wc, c);
            top.b_cls[c] = 0.0;
            continue;
        }
        const FixedPointFormat fmt = format_for_level(level);
        double* row = top.wc.row(c);
        for (std::size_t j = 0; j < top.wc.cols; ++j)
            row[j] = quantize_value(row[j], fmt);
        top.b_cls[c] = quantize_value(top.b_cls[c], fmt);
    }
    // outgoing side of pruned top-hidden neurons
    for (std::size_t j = 0; j < map.hidden[tl].size(); ++j)
        if (map.hidden[tl][j] == 0)
            for (std::size_t c = 0; c < top.wc.rows; ++c) top.wc(c, j) = 0.0;
}

// Produces a copy of the model with every neuron's parameters quantized per
// the map. A neuron at level l > 0 has its incoming weight column and bias
// quantized with l's bound format; at level 0 its incoming weights, outgoing
// weights, and bias are set to exactly 0 (the neuron is fully pruned). Class
// neurons own their Wc row and b_cls entry. Visible biases are untouched:
// they play no role in deterministic inference.
inline DbnModel apply_bitwidth_map(const DbnModel& model, const BitwidthMap& map) {
    check_map_shape(model, map);
    DbnModel q = model;
    for (std::size_t c = 0; c < model.num_hidden_layers(); ++c)
        requantize_coupling(q, model, map, c);
    return q;
}

}  // namespace axdbn
