#include "umfa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "umfa/blob.hpp"
#include "umfa/image_io.hpp"

namespace umfa {

using json = nlohmann::json;
namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (image_size < 16 || image_size % 16 != 0) {
        throw std::invalid_argument("image_size must be a multiple of 16, got " +
                                    std::to_string(image_size));
    }
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (lr <= 0.0f) throw std::invalid_argument("learning rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (stem_width < 1) throw std::invalid_argument("stem_width must be >= 1");
    if (!(weights.alpha >= 0.0f && weights.beta >= 0.0f && weights.gamma >= 0.0f)) {
        throw std::invalid_argument("loss weights must be non-negative");
    }
}

std::string config_to_json(const TrainConfig& c) {
    json j;
    j["data_dir"] = c.data_dir;
    j["out"] = c.out_path;
    j["epochs"] = c.epochs;
    j["image_size"] = c.image_size;
    j["lr"] = c.lr;
    j["alpha"] = c.weights.alpha;
    j["beta"] = c.weights.beta;
    j["gamma"] = c.weights.gamma;
    j["strategy"] = to_string(c.strategy);
    j["seed"] = c.seed;
    j["batch_size"] = c.batch_size;
    j["checkpoint_every"] = c.checkpoint_every;
    j["log_path"] = c.log_path;
    j["stem_width"] = c.stem_width;
    j["loss_weights_manifest"] = c.loss_weights_manifest;
    j["reshuffle_per_epoch"] = c.reshuffle_per_epoch;
    return j.dump();
}

TrainConfig config_from_json(const std::string& text) {
    const json j = json::parse(text);
    TrainConfig c;
    c.data_dir = j.value("data_dir", "");
    c.out_path = j.value("out", "");
    c.epochs = j.value("epochs", 2);
    c.image_size = j.value("image_size", 256);
    c.lr = j.value("lr", 1e-4f);
    c.weights.alpha = j.value("alpha", 0.8f);
    c.weights.beta = j.value("beta", 1.0f);
    c.weights.gamma = j.value("gamma", 1.0f);
    c.strategy = parse_strategy(j.value("strategy", "mfa"));
    c.seed = j.value("seed", std::uint64_t{0});
    c.batch_size = j.value("batch_size", 1);
    c.checkpoint_every = j.value("checkpoint_every", 0);
    c.log_path = j.value("log_path", "");
    c.stem_width = j.value("stem_width", 32);
    c.loss_weights_manifest = j.value("loss_weights_manifest", "");
    c.reshuffle_per_epoch = j.value("reshuffle_per_epoch", false);
    return c;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::string& dir, std::uint64_t seed, std::ostream* warn) {
    if (!fs::is_directory(dir)) {
        throw std::invalid_argument("dataset directory does not exist: " + dir);
    }
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".ppm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.size() < 2) {
        throw std::invalid_argument("dataset directory " + dir +
                                    " must contain at least 2 images");
    }

    std::mt19937_64 gen(seed);
    for (std::size_t i = files.size() - 1; i > 0; --i) {
        const std::size_t j = gen() % (i + 1);
        std::swap(files[i], files[j]);
    }
    if (files.size() % 2 != 0) {
        if (warn) *warn << "warning: odd image count, dropping " << files.back() << "\n";
        files.pop_back();
    }
    const std::size_t half = files.size() / 2;
    return {{files.begin(), files.begin() + half}, {files.begin() + half, files.end()}};
}

namespace {

constexpr const char* kCkptFormat = "umfa-checkpoint";
constexpr int kCkptVersion = 1;

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

}  // namespace

void save_checkpoint(const ModelParams& params, const TrainConfig& config, long long step,
                     const AdamState* adam, std::uint64_t loss_network_hash,
                     const std::string& path) {
    const fs::path mpath(path);
    const std::string blob_name = mpath.filename().string() + ".blob";

    json manifest;
    manifest["format"] = kCkptFormat;
    manifest["version"] = kCkptVersion;
    manifest["blob"] = blob_name;
    manifest["step"] = step;
    manifest["config"] = json::parse(config_to_json(config));
    manifest["loss_network_hash"] = loss_network_hash;

    std::vector<std::vector<float>> chunks;
    std::uint64_t offset = 0;
    json jparams = json::array();
    for (const auto& [name, tensor] : params.items()) {
        json jp;
        jp["name"] = name;
        jp["shape"] = shape_json(tensor->shape);
        jp["offset"] = offset;
        offset += tensor->numel() * sizeof(float);
        jparams.push_back(jp);
        chunks.push_back(tensor->data);
    }
    manifest["params"] = jparams;

    if (adam && adam->t > 0) {
        json jopt;
        jopt["t"] = adam->t;
        jopt["lr"] = adam->lr;
        json entries = json::array();
        for (std::size_t i = 0; i < adam->m.size(); ++i) {
            json je;
            je["name"] = params.items()[i].first;
            je["m_offset"] = offset;
            offset += adam->m[i].size() * sizeof(float);
            je["v_offset"] = offset;
            offset += adam->v[i].size() * sizeof(float);
            entries.push_back(je);
            chunks.push_back(adam->m[i]);
            chunks.push_back(adam->v[i]);
        }
        jopt["entries"] = entries;
        manifest["optimizer"] = jopt;
    }

    write_blob((mpath.parent_path() / blob_name).string(), chunks);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write checkpoint manifest: " + path);
    f << manifest.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("missing checkpoint file: " + path);
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed checkpoint manifest " + path + ": " + e.what());
    }
    if (manifest.value("format", "") != kCkptFormat) {
        throw std::runtime_error("not a checkpoint manifest: " + path);
    }
    if (manifest.value("version", -1) != kCkptVersion) {
        throw std::runtime_error("checkpoint version mismatch in " + path + " (expected " +
                                 std::to_string(kCkptVersion) + ")");
    }

    LoadedCheckpoint out;
    out.config = config_from_json(manifest.at("config").dump());
    out.step = manifest.at("step").get<long long>();
    out.loss_network_hash = manifest.value("loss_network_hash", std::uint64_t{0});

    const std::string blob_path =
        (fs::path(path).parent_path() / manifest.at("blob").get<std::string>()).string();

    std::map<std::string, json> by_name;
    for (const auto& jp : manifest.at("params")) {
        by_name[jp.at("name").get<std::string>()] = jp;
    }
    const auto expected = ModelParams::layout(out.config.stem_width);
    if (by_name.size() != expected.size()) {
        for (const auto& [name, shape] : expected) {
            if (!by_name.count(name)) {
                throw std::runtime_error("checkpoint manifest missing parameter " + name);
            }
        }
        throw std::runtime_error("checkpoint manifest lists unexpected parameters");
    }

    out.params = ModelParams::init(out.config.stem_width, /*seed=*/0);
    for (const auto& [name, tensor] : out.params.items()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw std::runtime_error("checkpoint manifest missing parameter " + name);
        }
        const json& jp = it->second;
        if (jp.at("shape") != shape_json(tensor->shape)) {
            throw std::runtime_error("checkpoint parameter " + name + " has wrong shape");
        }
        tensor->data =
            read_blob(blob_path, jp.at("offset").get<std::uint64_t>(), tensor->numel());
    }

    if (manifest.contains("optimizer")) {
        const json& jopt = manifest["optimizer"];
        AdamState adam;
        adam.lr = jopt.value("lr", out.config.lr);
        adam.t = jopt.at("t").get<long long>();
        const auto& items = out.params.items();
        std::size_t i = 0;
        for (const auto& je : jopt.at("entries")) {
            if (i >= items.size() || je.at("name").get<std::string>() != items[i].first) {
                throw std::runtime_error("checkpoint optimizer state is out of order");
            }
            const std::size_t count = items[i].second->numel();
            adam.m.push_back(read_blob(blob_path, je.at("m_offset").get<std::uint64_t>(), count));
            adam.v.push_back(read_blob(blob_path, je.at("v_offset").get<std::uint64_t>(), count));
            ++i;
        }
        out.adam = std::move(adam);
    }
    return out;
}

namespace {

struct PairCache {
    std::map<std::string, TensorPtr> images;   // resized
    std::map<std::string, TensorPtr> content_feats;
    std::map<std::string, std::map<TapId, TensorPtr>> style_grams;
};

TensorPtr load_resized(PairCache& cache, const std::string& path, int size) {
    auto it = cache.images.find(path);
    if (it != cache.images.end()) return it->second;
    auto img = resize_center(load_image(path), size);
    cache.images[path] = img;
    return img;
}

}  // namespace

TrainResult train(const TrainConfig& config) {
    config.validate();

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!config.log_path.empty()) {
        log_file.open(config.log_path, std::ios::trunc);
        if (!log_file) throw std::runtime_error("cannot open log file " + config.log_path);
        log = &log_file;
    }

    auto [content_files, style_files] = split_dataset(config.data_dir, config.seed, &std::cerr);

    LossNetwork phi = config.loss_weights_manifest.empty()
                          ? LossNetwork::seeded_random(config.seed)
                          : LossNetwork::load_weights(config.loss_weights_manifest);
    const std::uint64_t phi_hash = phi.content_hash();

    ModelParams params = ModelParams::init(config.stem_width, config.seed);
    AdamState adam;
    adam.lr = config.lr;
    long long start_step = 0;
    if (!config.resume.empty()) {
        auto ckpt = load_checkpoint(config.resume);
        if (ckpt.config.stem_width != config.stem_width) {
            throw std::runtime_error("resume checkpoint stem width " +
                                     std::to_string(ckpt.config.stem_width) +
                                     " does not match configured " +
                                     std::to_string(config.stem_width));
        }
        params = std::move(ckpt.params);
        start_step = ckpt.step;
        if (ckpt.adam) {
            adam = std::move(*ckpt.adam);
            adam.lr = config.lr;
        }
    }

    {
        json header;
        header["event"] = "config";
        header["config"] = json::parse(config_to_json(config));
        header["phi_source"] = phi.source();
        header["phi_hash"] = phi_hash;
        *log << header.dump() << "\n";
    }

    const long long pairs = static_cast<long long>(content_files.size());
    const long long steps_per_epoch = (pairs + config.batch_size - 1) / config.batch_size;
    const long long total_steps = steps_per_epoch * config.epochs;

    PairCache cache;
    auto params_list = params.tensors();
    // Params outside the active strategy's path (e.g. bfa.fuse under mfa)
    // get no gradient from backward; give every param a zero buffer so the
    // optimizer sees the full set.
    for (auto& t : params_list) t->ensure_grad();
    LossReport last_report;
    long long step = start_step;

    auto pick_decodable = [&](std::vector<std::string>& files, long long idx) -> TensorPtr {
        while (!files.empty()) {
            const std::string& path = files[idx % files.size()];
            try {
                return load_resized(cache, path, config.image_size);
            } catch (const std::exception& e) {
                json w;
                w["event"] = "warning";
                w["message"] = std::string("skipping undecodable image: ") + e.what();
                *log << w.dump() << "\n";
                files.erase(files.begin() + static_cast<std::ptrdiff_t>(idx % files.size()));
            }
        }
        throw std::runtime_error("no decodable images left in the dataset");
    };

    std::vector<long long> order(static_cast<std::size_t>(pairs));
    for (long long i = 0; i < pairs; ++i) order[static_cast<std::size_t>(i)] = i;
    long long shuffled_epoch = -1;

    for (; step < total_steps; ++step) {
        const long long epoch = step / steps_per_epoch;
        if (config.reshuffle_per_epoch && epoch != shuffled_epoch) {
            std::mt19937_64 gen(config.seed + 0x9e3779b97f4a7c15ull * (epoch + 1));
            for (std::size_t i = order.size() - 1; i > 0; --i) {
                std::swap(order[i], order[gen() % (i + 1)]);
            }
            shuffled_epoch = epoch;
        }

        Tape tape;
        TensorPtr total;
        LossReport report;
        if (config.batch_size == 1) {
            const long long idx = order[static_cast<std::size_t>(step % pairs)];
            auto content = pick_decodable(content_files, idx);
            auto style = pick_decodable(style_files, idx);

            const std::string& cpath = content_files[idx % content_files.size()];
            const std::string& spath = style_files[idx % style_files.size()];
            if (!cache.content_feats.count(cpath) || !cache.style_grams.count(spath)) {
                auto targets = make_targets(content, style, phi);
                cache.content_feats[cpath] = targets.content_feat;
                cache.style_grams[spath] = targets.style_grams;
            }
            PerceptualTargets targets;
            targets.content_feat = cache.content_feats[cpath];
            targets.style_grams = cache.style_grams[spath];

            auto output = stylize(tape, content, style, params, config.strategy);
            std::tie(total, report) =
                total_loss_with_targets(tape, output, content, targets, phi, config.weights);
        } else {
            std::vector<TensorPtr> cs, ss;
            for (int b = 0; b < config.batch_size; ++b) {
                const long long idx =
                    order[static_cast<std::size_t>((step * config.batch_size + b) % pairs)];
                cs.push_back(pick_decodable(content_files, idx));
                ss.push_back(pick_decodable(style_files, idx));
            }
            auto stack = [](const std::vector<TensorPtr>& ts) {
                Shape s = ts[0]->shape;
                s.n = static_cast<int>(ts.size());
                auto out = Tensor::zeros(s);
                std::size_t off = 0;
                for (const auto& t : ts) {
                    std::copy(t->data.begin(), t->data.end(), out->data.begin() + off);
                    off += t->numel();
                }
                return out;
            };
            auto content = stack(cs);
            auto style = stack(ss);
            auto output = stylize(tape, content, style, params, config.strategy);
            std::tie(total, report) = total_loss_with_targets(
                tape, output, content, make_targets(content, style, phi), phi, config.weights);
        }

        if (!std::isfinite(report.total)) {
            json last;
            last["total"] = last_report.total;
            last["style"] = last_report.style;
            last["content"] = last_report.content;
            last["ssim"] = last_report.ssim;
            throw std::runtime_error("non-finite loss at step " + std::to_string(step) +
                                     "; last report " + last.dump());
        }

        tape.backward(total);
        adam_step(params_list, adam);

        json line;
        line["step"] = step;
        line["total"] = report.total;
        line["style"] = report.style;
        line["content"] = report.content;
        line["ssim"] = report.ssim;
        line["per_tap"] = report.per_tap;
        *log << line.dump() << "\n";
        last_report = report;

        if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
            !config.out_path.empty()) {
            save_checkpoint(params, config, step + 1, &adam, phi_hash, config.out_path);
        }
    }

    if (!config.out_path.empty()) {
        save_checkpoint(params, config, total_steps, &adam, phi_hash, config.out_path);
    }
    return {config.out_path, last_report, total_steps - start_step};
}

}  // namespace umfa
