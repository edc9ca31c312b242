#include "umfa/loss_network.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "umfa/blob.hpp"
#include "umfa/ops.hpp"
#include "umfa/rng.hpp"

namespace umfa {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(TapId tap) {
    switch (tap) {
        case TapId::relu1_2: return "relu1_2";
        case TapId::relu2_2: return "relu2_2";
        case TapId::relu3_3: return "relu3_3";
        case TapId::relu4_3: return "relu4_3";
    }
    return "relu1_2";
}

const std::array<TapId, 4>& all_taps() {
    static const std::array<TapId, 4> taps = {TapId::relu1_2, TapId::relu2_2,
                                              TapId::relu3_3, TapId::relu4_3};
    return taps;
}

std::vector<std::tuple<std::string, int, int>> LossNetwork::topology() {
    const int widths[4] = {64, 128, 256, 512};
    const int convs[4] = {2, 2, 3, 3};
    std::vector<std::tuple<std::string, int, int>> out;
    int in_ch = 3;
    for (int b = 0; b < 4; ++b) {
        for (int j = 0; j < convs[b]; ++j) {
            out.emplace_back("block" + std::to_string(b + 1) + "_conv" + std::to_string(j + 1),
                             widths[b], in_ch);
            in_ch = widths[b];
        }
    }
    return out;
}

LossNetwork LossNetwork::seeded_random(std::uint64_t seed) {
    LossNetwork net;
    net.source_ = "seeded-random";
    Rng rng(seed);
    for (const auto& [name, out_ch, in_ch] : topology()) {
        Layer layer;
        layer.name = name;
        layer.weight = Tensor::zeros({out_ch, in_ch, 3, 3});
        const float bound = std::sqrt(6.0f / (static_cast<float>(in_ch) * 9.0f));
        for (auto& v : layer.weight->data) v = rng.uniform(-bound, bound);
        layer.bias = Tensor::zeros({1, out_ch, 1, 1});
        net.layers_.push_back(std::move(layer));
    }
    return net;
}

std::map<TapId, TensorPtr> LossNetwork::extract(Tape& tape, const TensorPtr& image,
                                                const std::set<TapId>& taps) const {
    const Shape& s = image->shape;
    if (s.c != 3) {
        throw std::invalid_argument("loss network expects a 3-channel image, got " + s.str());
    }
    if (s.h % 8 != 0 || s.w % 8 != 0) {
        throw std::invalid_argument("loss network input " + s.str() +
                                    " must have spatial dims divisible by 8");
    }
    if (taps.empty()) return {};

    const std::array<TapId, 4>& order = all_taps();
    int deepest_block = 0;
    for (int b = 0; b < 4; ++b) {
        if (taps.count(order[b])) deepest_block = b + 1;
    }

    TensorPtr x = image;
    if (has_preproc_) {
        auto mean = Tensor::zeros({s.n, 3, 1, 1});
        auto inv_std = Tensor::zeros({s.n, 3, 1, 1});
        for (int in = 0; in < s.n; ++in) {
            for (int c = 0; c < 3; ++c) {
                mean->data[in * 3 + c] = preproc_mean_[c];
                inv_std->data[in * 3 + c] = 1.0f / preproc_std_[c];
            }
        }
        x = ops::mul_channel(tape, ops::sub_channel(tape, x, mean), inv_std);
    }

    std::map<TapId, TensorPtr> result;
    const int convs[4] = {2, 2, 3, 3};
    std::size_t li = 0;
    for (int b = 0; b < 4 && b < deepest_block; ++b) {
        if (b > 0) x = ops::maxpool2d(tape, x);
        for (int j = 0; j < convs[b]; ++j, ++li) {
            const Layer& layer = layers_[li];
            x = ops::relu(tape, ops::conv2d(tape, x, layer.weight, layer.bias, 1, 1));
        }
        if (taps.count(order[b])) result[order[b]] = x;
    }
    return result;
}

std::uint64_t LossNetwork::content_hash() const {
    std::vector<std::vector<float>> chunks;
    for (const auto& layer : layers_) {
        chunks.push_back(layer.weight->data);
        chunks.push_back(layer.bias->data);
    }
    return fnv1a(chunks);
}

void LossNetwork::save_weights(const std::string& manifest_path) const {
    const fs::path mpath(manifest_path);
    const std::string blob_name = mpath.filename().string() + ".blob";

    json manifest;
    manifest["format"] = "umfa-loss-network";
    manifest["version"] = 1;
    manifest["blob"] = blob_name;
    manifest["source"] = source_;

    std::vector<std::vector<float>> chunks;
    std::uint64_t offset = 0;
    json jlayers = json::array();
    for (const auto& layer : layers_) {
        json jl;
        jl["name"] = layer.name;
        jl["weight_shape"] = {layer.weight->shape.n, layer.weight->shape.c,
                              layer.weight->shape.h, layer.weight->shape.w};
        jl["weight_offset"] = offset;
        offset += layer.weight->numel() * sizeof(float);
        jl["bias_shape"] = {static_cast<int>(layer.bias->numel())};
        jl["bias_offset"] = offset;
        offset += layer.bias->numel() * sizeof(float);
        jlayers.push_back(jl);
        chunks.push_back(layer.weight->data);
        chunks.push_back(layer.bias->data);
    }
    manifest["layers"] = jlayers;
    if (has_preproc_) {
        manifest["preprocessing"] = {{"mean", preproc_mean_}, {"std", preproc_std_}};
    }

    write_blob((mpath.parent_path() / blob_name).string(), chunks);
    std::ofstream f(manifest_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write manifest: " + manifest_path);
    f << manifest.dump(2) << "\n";
}

LossNetwork LossNetwork::load_weights(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw std::runtime_error("missing loss-network manifest: " + manifest_path);
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed loss-network manifest " + manifest_path + ": " +
                                 e.what());
    }
    if (manifest.value("format", "") != "umfa-loss-network") {
        throw std::runtime_error("not a loss-network manifest: " + manifest_path);
    }
    if (manifest.value("version", 0) != 1) {
        throw std::runtime_error("unsupported loss-network manifest version in " +
                                 manifest_path);
    }
    const std::string blob_path =
        (fs::path(manifest_path).parent_path() / manifest.at("blob").get<std::string>())
            .string();

    std::map<std::string, json> by_name;
    for (const auto& jl : manifest.at("layers")) {
        by_name[jl.at("name").get<std::string>()] = jl;
    }

    LossNetwork net;
    net.source_ = "external-weights";
    for (const auto& [name, out_ch, in_ch] : topology()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw std::runtime_error("loss-network manifest missing layer " + name);
        }
        const json& jl = it->second;
        const auto ws = jl.at("weight_shape").get<std::vector<int>>();
        if (ws != std::vector<int>{out_ch, in_ch, 3, 3}) {
            throw std::runtime_error("loss-network layer " + name +
                                     " has wrong weight shape (expected [" +
                                     std::to_string(out_ch) + "," + std::to_string(in_ch) +
                                     ",3,3])");
        }
        const auto bs = jl.at("bias_shape").get<std::vector<int>>();
        if (bs != std::vector<int>{out_ch}) {
            throw std::runtime_error("loss-network layer " + name + " has wrong bias shape");
        }
        Layer layer;
        layer.name = name;
        layer.weight = Tensor::zeros({out_ch, in_ch, 3, 3});
        layer.weight->data = read_blob(blob_path, jl.at("weight_offset").get<std::uint64_t>(),
                                       layer.weight->numel());
        layer.bias = Tensor::zeros({1, out_ch, 1, 1});
        layer.bias->data = read_blob(blob_path, jl.at("bias_offset").get<std::uint64_t>(),
                                     layer.bias->numel());
        net.layers_.push_back(std::move(layer));
    }
    if (manifest.contains("preprocessing")) {
        const auto& jp = manifest["preprocessing"];
        net.has_preproc_ = true;
        for (int c = 0; c < 3; ++c) {
            net.preproc_mean_[c] = jp.at("mean").at(c).get<float>();
            net.preproc_std_[c] = jp.at("std").at(c).get<float>();
        }
    }
    return net;
}

}  // namespace umfa
