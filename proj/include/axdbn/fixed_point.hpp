#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "matrix.hpp"

namespace axdbn {

// Two's-complement Q(m.n): m integer bits (sign included), n fractional bits.
// Representable values are k * 2^-n for integer codes k in
// [-2^(m+n-1), 2^(m+n-1) - 1], i.e. the range [-2^(m-1), 2^(m-1) - 2^-n].
struct FixedPointFormat {
    int int_bits = 1;   // m
    int frac_bits = 0;  // n

    int total_bits() const { return int_bits + frac_bits; }
    double lowest() const { return -std::ldexp(1.0, int_bits - 1); }
    // For m+n > 53 this bound rounds up to the nearest double; every
    // in-range double is then already on the quantization grid.
    double highest() const {
        return std::ldexp(1.0, int_bits - 1) - std::ldexp(1.0, -frac_bits);
    }
    double step() const { return std::ldexp(1.0, -frac_bits); }

    bool operator==(const FixedPointFormat&) const = default;
};

// Bitwidth search space: total bits -> bound format. Level 0 means the
// neuron is fully pruned.
inline const std::vector<int>& standard_levels() {
    static const std::vector<int> levels = {0, 4, 8, 12, 16, 32, 64};
    return levels;
}

inline bool valid_level(int bits) {
    for (int l : standard_levels())
        if (l == bits) return true;
    return false;
}

inline FixedPointFormat format_for_level(int bits) {
    switch (bits) {
        case 4:  return {2, 2};
        case 8:  return {2, 6};
        case 12: return {6, 6};
        case 16: return {8, 8};
        case 32: return {8, 24};
        case 64: return {8, 56};
        default:
            throw std::invalid_argument("no fixed-point format bound to level " +
                                        std::to_string(bits));
    }
}

// Nearest representable value, ties rounding to the even code, with
// saturation at the format bounds.
inline double quantize_value(double x, const FixedPointFormat& fmt) {
    require(fmt.int_bits >= 1 && fmt.frac_bits >= 0, "invalid fixed-point format");
    const double lo = fmt.lowest();
    const double hi = fmt.highest();
    if (x <= lo) return lo;
    if (x >= hi) return hi;
    const double scaled = std::ldexp(x, fmt.frac_bits);
    // Doubles this large are already integers, hence already on the grid.
    if (std::fabs(scaled) >= 0x1.0p53) return x;
    double k = std::floor(scaled);
    const double r = scaled - k;
    if (r > 0.5) {
        k += 1.0;
    } else if (r == 0.5) {
        if (std::fmod(k, 2.0) != 0.0) k += 1.0;
    }
    return std::ldexp(k, -fmt.frac_bits);
}

// Per-neuron bitwidth assignment: one level for every hidden neuron in every
// layer plus one for every class neuron.
struct BitwidthMap {
    std::vector<std::vector<int>> hidden;  // [layer][neuron]
    std::vector<int> cls;                  // [class neuron]

    static BitwidthMap uniform(const std::vector<std::size_t>& layer_sizes,
                               std::size_t num_classes, int level) {
        BitwidthMap m;
        m.hidden.reserve(layer_sizes.size());
        for (std::size_t h : layer_sizes) m.hidden.emplace_back(h, level);
        m.cls.assign(num_classes, level);
        return m;
    }

    std::size_t total_neurons() const {
        std::size_t n = cls.size();
        for (const auto& layer : hidden) n += layer.size();
        return n;
    }

    bool operator==(const BitwidthMap&) const = default;
};

// Mean total-bit level over all mapped neurons; pruned neurons count as 0.
inline double avg_bitwidth(const BitwidthMap& map) {
    const std::size_t n = map.total_neurons();
    require(n > 0, "avg_bitwidth: empty map");
    double sum = 0.0;
    for (const auto& layer : map.hidden)
        for (int l : layer) sum += l;
    for (int l : map.cls) sum += l;
    return sum / static_cast<double>(n);
}

}  // namespace axdbn
