#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "json.hpp"

#include "dbn.hpp"
#include "fixed_point.hpp"
#include "matrix.hpp"
#include "quantize.hpp"

namespace axdbn {

// Versioned JSON model container: architecture, all parameter arrays in
// row-major order with declared shapes, the RNG seed the run was derived
// from, and optionally the bitwidth map as flat (layer, neuron, bits)
// triples. Doubles round-trip exactly through the JSON encoder.

constexpr int kModelFormatVersion = 1;
constexpr const char* kModelFormatName = "axdbn-model";

struct ModelFile {
    DbnModel model;
    std::uint64_t seed = 0;
    std::optional<BitwidthMap> map;
};

namespace detail {

inline nlohmann::json mat_to_json(const Mat& m) {
    return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Mat mat_from_json(const nlohmann::json& j) {
    Mat m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data = j.at("data").get<std::vector<double>>();
    require(m.data.size() == m.rows * m.cols, "model container: bad matrix shape");
    return m;
}

}  // namespace detail

inline nlohmann::json model_to_json(const ModelFile& mf) {
    const DbnModel& m = mf.model;
    nlohmann::json j;
    j["format"] = kModelFormatName;
    j["version"] = kModelFormatVersion;
    j["arch"] = {{"visible", m.arch.visible_size},
                 {"hidden", m.arch.layer_sizes},
                 {"classes", m.arch.num_classes}};
    j["seed"] = mf.seed;
    nlohmann::json lower = nlohmann::json::array();
    for (const RbmParams& p : m.lower)
        lower.push_back({{"w", detail::mat_to_json(p.w)},
                         {"b_vis", p.b_vis},
                         {"b_hid", p.b_hid}});
    j["lower"] = std::move(lower);
    j["top"] = {{"w", detail::mat_to_json(m.top.w)},
                {"wc", detail::mat_to_json(m.top.wc)},
                {"b_vis", m.top.b_vis},
                {"b_hid", m.top.b_hid},
                {"b_cls", m.top.b_cls}};
    if (mf.map) {
        nlohmann::json triples = nlohmann::json::array();
        for (const NeuronId& id : all_neurons(m.arch))
            triples.push_back({id.layer, id.index, level_of(*mf.map, id)});
        j["bitwidth_map"] = std::move(triples);
    }
    return j;
}

inline ModelFile model_from_json(const nlohmann::json& j) {
    require(j.at("format").get<std::string>() == kModelFormatName,
            "model container: unknown format");
    require(j.at("version").get<int>() == kModelFormatVersion,
            "model container: unsupported version");
    ModelFile mf;
    mf.model.arch.visible_size = j.at("arch").at("visible").get<std::size_t>();
    mf.model.arch.layer_sizes =
        j.at("arch").at("hidden").get<std::vector<std::size_t>>();
    mf.model.arch.num_classes = j.at("arch").at("classes").get<std::size_t>();
    validate(mf.model.arch);
    mf.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& lj : j.at("lower")) {
        RbmParams p;
        p.w = detail::mat_from_json(lj.at("w"));
        p.b_vis = lj.at("b_vis").get<Vec>();
        p.b_hid = lj.at("b_hid").get<Vec>();
        mf.model.lower.push_back(std::move(p));
    }
    const auto& tj = j.at("top");
    mf.model.top.w = detail::mat_from_json(tj.at("w"));
    mf.model.top.wc = detail::mat_from_json(tj.at("wc"));
    mf.model.top.b_vis = tj.at("b_vis").get<Vec>();
    mf.model.top.b_hid = tj.at("b_hid").get<Vec>();
    mf.model.top.b_cls = tj.at("b_cls").get<Vec>();
    if (j.contains("bitwidth_map")) {
        BitwidthMap map = BitwidthMap::uniform(mf.model.arch.layer_sizes,
                                               mf.model.arch.num_classes, 0);
        for (const auto& t : j.at("bitwidth_map")) {
            NeuronId id{t.at(0).get<std::size_t>(), t.at(1).get<std::size_t>()};
            set_level(map, id, t.at(2).get<int>());
        }
        mf.map = std::move(map);
    }
    return mf;
}

inline void save_model(const std::string& path, const ModelFile& mf) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << model_to_json(mf).dump() << "\n";
}

inline ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    return model_from_json(j);
}

}  // namespace axdbn
