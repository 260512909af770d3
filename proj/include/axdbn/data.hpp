#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "matrix.hpp"
#include "rng.hpp"

namespace axdbn {

// Image = flat row-major pixel vector with intensities in [0,1].
using ImageVec = Vec;

struct Dataset {
    std::vector<ImageVec> images;
    std::vector<int> labels;  // empty for unlabeled data
    int num_classes = 10;

    bool labeled() const { return !labels.empty(); }
    std::size_t size() const { return images.size(); }
};

struct SplitSpec {
    std::size_t num_labeled = 0;
    std::size_t num_unlabeled = 0;
    std::uint64_t seed = 0;
};

struct NoiseSpec {
    double factor = 0.0;  // fraction of pixels hit, in [0,1]
    std::uint64_t seed = 0;
};

namespace idx {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(std::size_t offset, const std::string& what) {
    std::ostringstream os;
    os << "idx parse error at byte " << offset << ": " << what;
    throw ParseError(os.str());
}

inline std::uint32_t read_u32_be(std::istream& in, std::size_t& offset,
                                 const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) fail(offset, std::string("truncated ") + what);
    offset += 4;
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace idx

// Parses an IDX image file: u32 magic 0x00000803, count, rows, cols, then
// count*rows*cols u8 pixels, all big-endian. Pixels are mapped to p/255.
inline std::vector<ImageVec> load_idx_images(std::istream& in) {
    std::size_t offset = 0;
    std::uint32_t magic = idx::read_u32_be(in, offset, "image magic");
    if (magic != idx::kImageMagic) idx::fail(0, "expected image magic 0x00000803");
    std::uint32_t count = idx::read_u32_be(in, offset, "image count");
    std::uint32_t rows = idx::read_u32_be(in, offset, "row count");
    std::uint32_t cols = idx::read_u32_be(in, offset, "column count");
    if (rows == 0 || cols == 0) idx::fail(offset, "zero image dimensions");
    const std::size_t pixels = std::size_t(rows) * cols;

    std::vector<ImageVec> images(count);
    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(pixels));
        if (static_cast<std::size_t>(in.gcount()) != pixels)
            idx::fail(offset + static_cast<std::size_t>(in.gcount()),
                      "truncated pixel data");
        offset += pixels;
        ImageVec img(pixels);
        for (std::size_t p = 0; p < pixels; ++p) img[p] = buf[p] / 255.0;
        images[i] = std::move(img);
    }
    return images;
}

// Parses an IDX label file: u32 magic 0x00000801, count, then count u8 labels.
inline std::vector<int> load_idx_labels(std::istream& in, int num_classes = 10) {
    std::size_t offset = 0;
    std::uint32_t magic = idx::read_u32_be(in, offset, "label magic");
    if (magic != idx::kLabelMagic) idx::fail(0, "expected label magic 0x00000801");
    std::uint32_t count = idx::read_u32_be(in, offset, "label count");

    std::vector<int> labels(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        int ch = in.get();
        if (ch == std::istream::traits_type::eof())
            idx::fail(offset, "truncated label data");
        if (ch >= num_classes) idx::fail(offset, "label out of range");
        labels[i] = ch;
        ++offset;
    }
    return labels;
}

inline void save_idx_images(std::ostream& out, const std::vector<ImageVec>& images,
                            std::uint32_t rows, std::uint32_t cols) {
    idx::write_u32_be(out, idx::kImageMagic);
    idx::write_u32_be(out, static_cast<std::uint32_t>(images.size()));
    idx::write_u32_be(out, rows);
    idx::write_u32_be(out, cols);
    const std::size_t pixels = std::size_t(rows) * cols;
    for (const auto& img : images) {
        require(img.size() == pixels, "save_idx_images: image size mismatch");
        for (double x : img) {
            double clamped = std::min(1.0, std::max(0.0, x));
            out.put(static_cast<char>(
                static_cast<unsigned char>(std::lround(clamped * 255.0))));
        }
    }
}

inline void save_idx_labels(std::ostream& out, const std::vector<int>& labels) {
    idx::write_u32_be(out, idx::kLabelMagic);
    idx::write_u32_be(out, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) out.put(static_cast<char>(static_cast<unsigned char>(l)));
}

inline std::vector<ImageVec> load_idx_images_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return load_idx_images(in);
}

inline std::vector<int> load_idx_labels_file(const std::string& path,
                                             int num_classes = 10) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return load_idx_labels(in, num_classes);
}

inline Dataset load_dataset(const std::string& images_path,
                            const std::string& labels_path, int num_classes = 10) {
    Dataset d;
    d.images = load_idx_images_file(images_path);
    d.labels = load_idx_labels_file(labels_path, num_classes);
    d.num_classes = num_classes;
    require(d.images.size() == d.labels.size(),
            "dataset: image/label count mismatch");
    return d;
}

// Seeded shuffle of the source indices; the first l become the labeled set
// (labels kept), the next u the unlabeled set (labels dropped). The two sets
// are disjoint by construction.
inline std::pair<Dataset, Dataset> split_semi_supervised(const Dataset& source,
                                                         const SplitSpec& spec) {
    require(source.labeled(), "split_semi_supervised: source must be labeled");
    require(spec.num_labeled + spec.num_unlabeled <= source.size(),
            "split_semi_supervised: l + u exceeds dataset size");
    Rng rng(spec.seed);
    std::vector<std::size_t> idx = rng.permutation(source.size());

    Dataset labeled;
    labeled.num_classes = source.num_classes;
    labeled.images.reserve(spec.num_labeled);
    labeled.labels.reserve(spec.num_labeled);
    for (std::size_t i = 0; i < spec.num_labeled; ++i) {
        labeled.images.push_back(source.images[idx[i]]);
        labeled.labels.push_back(source.labels[idx[i]]);
    }

    Dataset unlabeled;
    unlabeled.num_classes = source.num_classes;
    unlabeled.images.reserve(spec.num_unlabeled);
    for (std::size_t i = 0; i < spec.num_unlabeled; ++i)
        unlabeled.images.push_back(source.images[idx[spec.num_labeled + i]]);

    return {std::move(labeled), std::move(unlabeled)};
}

// Salt-and-pepper corruption: per image, floor(factor * pixels) distinct
// positions are chosen uniformly at random and each is set to 1.0 or 0.0
// with equal probability. Deterministic given the seed.
inline std::vector<ImageVec> apply_salt_pepper(const std::vector<ImageVec>& images,
                                               const NoiseSpec& spec) {
    require(spec.factor >= 0.0 && spec.factor <= 1.0,
            "apply_salt_pepper: factor outside [0,1]");
    Rng rng(spec.seed);
    std::vector<ImageVec> out = images;
    std::vector<std::size_t> idx;
    for (auto& img : out) {
        const std::size_t n = img.size();
        const auto hits =
            static_cast<std::size_t>(std::floor(spec.factor * double(n)));
        if (hits == 0) continue;
        idx.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t t = 0; t < hits; ++t)
            std::swap(idx[t], idx[t + rng.index(n - t)]);
        for (std::size_t t = 0; t < hits; ++t)
            img[idx[t]] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    return out;
}

}  // namespace axdbn
