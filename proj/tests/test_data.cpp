#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <set>
#include <sstream>
#include <string>

#include "axdbn/data.hpp"
#include "axdbn/synth.hpp"

using namespace axdbn;

namespace {

std::string be32(std::uint32_t v) {
    std::string s(4, '\0');
    s[0] = char(v >> 24);
    s[1] = char(v >> 16);
    s[2] = char(v >> 8);
    s[3] = char(v);
    return s;
}

}  // namespace

TEST_CASE("image parsing maps bytes to p/255") {
    std::string payload = be32(2051) + be32(1) + be32(2) + be32(2);
    payload += '\x00';
    payload += '\xff';
    payload += '\x80';
    payload += '\x40';
    std::istringstream in(payload, std::ios::binary);
    auto images = load_idx_images(in);
    REQUIRE(images.size() == 1);
    REQUIRE(images[0].size() == 4);
    CHECK(images[0][0] == 0.0);
    CHECK(images[0][1] == 1.0);
    CHECK(images[0][2] == 128.0 / 255.0);
    CHECK(images[0][3] == 64.0 / 255.0);
}

TEST_CASE("image parse errors name the problem and offset") {
    {
        std::istringstream in(be32(0x00000801) + be32(0), std::ios::binary);
        CHECK_THROWS_WITH_AS(load_idx_images(in),
                             doctest::Contains("expected image magic"),
                             idx::ParseError);
    }
    {
        // header promises 2x2 pixels but only 3 bytes follow
        std::string payload = be32(2051) + be32(1) + be32(2) + be32(2) + "abc";
        std::istringstream in(payload, std::ios::binary);
        try {
            load_idx_images(in);
            FAIL("expected a parse error");
        } catch (const idx::ParseError& e) {
            CHECK(std::string(e.what()).find("byte") != std::string::npos);
            CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        }
    }
}

TEST_CASE("label parsing and errors") {
    {
        std::string payload = be32(2049) + be32(3);
        payload += '\x07';
        payload += '\x00';
        payload += '\x09';
        std::istringstream in(payload, std::ios::binary);
        CHECK(load_idx_labels(in) == std::vector<int>{7, 0, 9});
    }
    {
        std::string payload = be32(2049) + be32(3);
        payload += '\x07';
        payload += '\x00';
        std::istringstream in(payload, std::ios::binary);
        CHECK_THROWS_AS(load_idx_labels(in), idx::ParseError);
    }
    {
        std::string payload = be32(2051) + be32(1);
        std::istringstream in(payload, std::ios::binary);
        CHECK_THROWS_WITH_AS(load_idx_labels(in),
                             doctest::Contains("expected label magic"),
                             idx::ParseError);
    }
    {
        std::string payload = be32(2049) + be32(1);
        payload += '\x0c';  // 12 >= 10 classes
        std::istringstream in(payload, std::ios::binary);
        CHECK_THROWS_AS(load_idx_labels(in), idx::ParseError);
    }
}

TEST_CASE("idx round trip is byte identical") {
    Dataset d = synth_digits(40, 99);
    std::ostringstream img_out(std::ios::binary), lab_out(std::ios::binary);
    save_idx_images(img_out, d.images, 28, 28);
    save_idx_labels(lab_out, d.labels);
    const std::string img_bytes = img_out.str();
    const std::string lab_bytes = lab_out.str();

    std::istringstream img_in(img_bytes, std::ios::binary);
    std::istringstream lab_in(lab_bytes, std::ios::binary);
    auto images = load_idx_images(img_in);
    auto labels = load_idx_labels(lab_in);

    std::ostringstream img_out2(std::ios::binary), lab_out2(std::ios::binary);
    save_idx_images(img_out2, images, 28, 28);
    save_idx_labels(lab_out2, labels);
    CHECK(img_out2.str() == img_bytes);
    CHECK(lab_out2.str() == lab_bytes);
}

TEST_CASE("semi-supervised split") {
    Dataset d = synth_digits(60, 5);
    auto [lab, unl] = split_semi_supervised(d, {40, 15, 123});
    CHECK(lab.size() == 40);
    CHECK(lab.labels.size() == 40);
    CHECK(unl.size() == 15);
    CHECK(unl.labels.empty());

    // same seed twice: identical partition
    auto [lab2, unl2] = split_semi_supervised(d, {40, 15, 123});
    CHECK(lab.images == lab2.images);
    CHECK(lab.labels == lab2.labels);
    CHECK(unl.images == unl2.images);

    // labeled set retains the original (image, label) pairing
    for (std::size_t i = 0; i < lab.size(); ++i) {
        bool found = false;
        for (std::size_t j = 0; j < d.size(); ++j)
            if (d.images[j] == lab.images[i] && d.labels[j] == lab.labels[i])
                found = true;
        CHECK(found);
    }

    auto [e1, e2] = split_semi_supervised(d, {0, 0, 9});
    CHECK(e1.size() == 0);
    CHECK(e2.size() == 0);

    CHECK_THROWS(split_semi_supervised(d, {50, 20, 1}));
    Dataset unlabeled_src;
    unlabeled_src.images = d.images;
    CHECK_THROWS(split_semi_supervised(unlabeled_src, {1, 0, 1}));
}

TEST_CASE("split produces disjoint sets covering l+u items") {
    Dataset d;
    d.num_classes = 10;
    for (int i = 0; i < 30; ++i) {
        d.images.push_back(Vec{double(i)});  // unique marker per image
        d.labels.push_back(i % 10);
    }
    auto [lab, unl] = split_semi_supervised(d, {12, 11, 77});
    std::set<double> seen;
    for (const auto& v : lab.images) seen.insert(v[0]);
    for (const auto& v : unl.images) seen.insert(v[0]);
    CHECK(seen.size() == 23);  // disjoint: no marker collapsed
}

TEST_CASE("salt and pepper noise") {
    std::vector<ImageVec> base(5, ImageVec(784, 0.5));

    auto zero = apply_salt_pepper(base, {0.0, 4});
    CHECK(zero == base);

    auto full = apply_salt_pepper(base, {1.0, 4});
    for (const auto& img : full)
        for (double x : img) CHECK((x == 0.0 || x == 1.0));

    auto tenth = apply_salt_pepper(base, {0.1, 4});
    for (const auto& img : tenth) {
        int changed = 0;
        for (std::size_t i = 0; i < img.size(); ++i)
            if (img[i] != 0.5) ++changed;
        CHECK(changed == 78);  // floor(0.1 * 784)
        for (double x : img) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
        }
    }

    auto again = apply_salt_pepper(base, {0.1, 4});
    CHECK(again == tenth);  // deterministic given seed

    CHECK_THROWS(apply_salt_pepper(base, {1.5, 0}));
}
