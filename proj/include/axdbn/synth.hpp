#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "data.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace axdbn {

// Seeded generator of MNIST-shaped digit images (28x28, 10 classes) for
// environments without the real dataset. Each sample is a digit glyph with
// random shift, intensity, stroke blur, and pixel noise; intensities land on
// the k/255 grid so IDX round-trips are exact.

namespace synth_detail {

constexpr int kGlyphSize = 7;
constexpr int kScale = 3;  // 21x21 glyph footprint, centered; strokes stay thin
constexpr int kImageSize = 28;
constexpr int kMargin = (kImageSize - kGlyphSize * kScale) / 2;

inline const std::array<std::array<const char*, 7>, 10>& glyphs() {
    static const std::array<std::array<const char*, 7>, 10> g = {{
        {".#####.", "##...##", "##...##", "##...##", "##...##", "##...##", ".#####."},
        {"...##..", "..###..", "...##..", "...##..", "...##..", "...##..", "..####."},
        {".#####.", "##...##", ".....##", "...###.", "..##...", ".##....", "#######"},
        {".#####.", "##...##", ".....##", "..####.", ".....##", "##...##", ".#####."},
        {"....##.", "...###.", "..####.", ".##.##.", "#######", "....##.", "....##."},
        {"######.", "##.....", "#####..", ".....##", ".....##", "##...##", ".#####."},
        {".#####.", "##.....", "######.", "##...##", "##...##", "##...##", ".#####."},
        {"#######", ".....##", "....##.", "...##..", "..##...", "..##...", "..##..."},
        {".#####.", "##...##", "##...##", ".#####.", "##...##", "##...##", ".#####."},
        {".#####.", "##...##", "##...##", ".######", ".....##", ".....##", ".#####."},
    }};
    return g;
}

inline Vec box_blur(const Vec& img) {
    Vec out(img.size(), 0.0);
    for (int r = 0; r < kImageSize; ++r)
        for (int c = 0; c < kImageSize; ++c) {
            double s = 0.0;
            int n = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= kImageSize || cc < 0 || cc >= kImageSize)
                        continue;
                    s += img[std::size_t(rr) * kImageSize + cc];
                    ++n;
                }
            out[std::size_t(r) * kImageSize + c] = s / n;
        }
    return out;
}

inline const std::vector<Vec>& templates() {
    static const std::vector<Vec> t = [] {
        std::vector<Vec> out;
        out.reserve(10);
        for (const auto& glyph : glyphs()) {
            Vec img(std::size_t(kImageSize) * kImageSize, 0.0);
            for (int r = 0; r < kGlyphSize; ++r)
                for (int c = 0; c < kGlyphSize; ++c) {
                    if (glyph[std::size_t(r)][c] != '#') continue;
                    for (int dr = 0; dr < kScale; ++dr)
                        for (int dc = 0; dc < kScale; ++dc)
                            img[std::size_t(kMargin + r * kScale + dr) * kImageSize +
                                (kMargin + c * kScale + dc)] = 1.0;
                }
            out.push_back(box_blur(img));
        }
        return out;
    }();
    return t;
}

inline Vec shift_image(const Vec& img, int dy, int dx) {
    Vec out(img.size(), 0.0);
    for (int r = 0; r < kImageSize; ++r) {
        const int sr = r - dy;
        if (sr < 0 || sr >= kImageSize) continue;
        for (int c = 0; c < kImageSize; ++c) {
            const int sc = c - dx;
            if (sc < 0 || sc >= kImageSize) continue;
            out[std::size_t(r) * kImageSize + c] =
                img[std::size_t(sr) * kImageSize + sc];
        }
    }
    return out;
}

// horizontal shear: row r moves by round(s * (r - center))
inline Vec shear_image(const Vec& img, double s) {
    Vec out(img.size(), 0.0);
    for (int r = 0; r < kImageSize; ++r) {
        const int dx = int(std::lround(s * (r - kImageSize / 2)));
        for (int c = 0; c < kImageSize; ++c) {
            const int sc = c - dx;
            if (sc < 0 || sc >= kImageSize) continue;
            out[std::size_t(r) * kImageSize + c] =
                img[std::size_t(r) * kImageSize + sc];
        }
    }
    return out;
}

}  // namespace synth_detail

inline Dataset synth_digits(std::size_t count, std::uint64_t seed,
                            int num_classes = 10) {
    require(num_classes >= 2 && num_classes <= 10, "synth_digits: 2..10 classes");
    Rng rng(seed);
    Dataset d;
    d.num_classes = num_classes;
    d.images.reserve(count);
    d.labels.reserve(count);
    const auto& temps = synth_detail::templates();
    for (std::size_t i = 0; i < count; ++i) {
        const auto label = static_cast<int>(rng.index(std::size_t(num_classes)));
        const int dy = static_cast<int>(rng.index(7)) - 3;
        const int dx = static_cast<int>(rng.index(7)) - 3;
        const double shear = rng.uniform(-0.12, 0.12);
        const double amp = rng.uniform(0.6, 1.0);
        const bool thick = rng.bernoulli(0.5);
        const bool occluded = rng.bernoulli(0.25);
        const int occ_r = static_cast<int>(rng.index(19));
        const int occ_c = static_cast<int>(rng.index(19));
        Vec img = synth_detail::shear_image(
            synth_detail::shift_image(temps[std::size_t(label)], dy, dx), shear);
        if (thick) img = synth_detail::box_blur(img);
        if (occluded)
            for (int r = 0; r < 10; ++r)
                for (int c = 0; c < 10; ++c)
                    img[std::size_t(occ_r + r) * synth_detail::kImageSize +
                        (occ_c + c)] = 0.0;
        for (double& x : img) {
            x = amp * x + rng.normal(0.0, 0.05);
            x = std::min(1.0, std::max(0.0, x));
            x = std::lround(x * 255.0) / 255.0;
        }
        d.images.push_back(std::move(img));
        d.labels.push_back(label);
    }
    return d;
}

// Writes the four official-format IDX files into dir.
inline void write_synth_idx(const std::string& dir, std::size_t train_count,
                            std::size_t test_count, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    const Dataset train = synth_digits(train_count, derive_seed(seed, 1));
    const Dataset test = synth_digits(test_count, derive_seed(seed, 2));
    auto write = [&](const std::string& name, auto&& fn) {
        std::ofstream out(dir + "/" + name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + dir + "/" + name);
        fn(out);
    };
    write("train-images-idx3-ubyte",
          [&](std::ostream& o) { save_idx_images(o, train.images, 28, 28); });
    write("train-labels-idx1-ubyte",
          [&](std::ostream& o) { save_idx_labels(o, train.labels); });
    write("t10k-images-idx3-ubyte",
          [&](std::ostream& o) { save_idx_images(o, test.images, 28, 28); });
    write("t10k-labels-idx1-ubyte",
          [&](std::ostream& o) { save_idx_labels(o, test.labels); });
}

}  // namespace axdbn
