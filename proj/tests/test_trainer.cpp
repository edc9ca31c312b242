#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "umfa/adam.hpp"
#include "umfa/image_io.hpp"
#include "umfa/rng.hpp"
#include "umfa/tensor.hpp"
#include "umfa/trainer.hpp"

using namespace umfa;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("umfa_trainer_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void make_dataset(const fs::path& dir, int count, std::uint64_t seed = 77) {
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        auto img = Tensor::zeros({1, 3, 36, 36});
        for (auto& v : img->data) v = rng.unit();
        save_image(img, (dir / ("img" + std::to_string(i) + ".ppm")).string());
    }
}

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::string> step_lines(const fs::path& log_path) {
    std::ifstream f(log_path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line)) {
        if (json::parse(line).value("event", "") == "") out.push_back(line);
    }
    return out;
}

TrainConfig tiny_config(const fs::path& data, const fs::path& out, const fs::path& log) {
    TrainConfig c;
    c.data_dir = data.string();
    c.out_path = out.string();
    c.log_path = log.string();
    c.epochs = 2;
    c.image_size = 32;
    c.stem_width = 4;
    c.lr = 1e-3f;
    c.seed = 12;
    return c;
}

}  // namespace

TEST_CASE("config json round trip") {
    TrainConfig c;
    c.data_dir = "/tmp/data";
    c.out_path = "/tmp/ckpt.json";
    c.epochs = 7;
    c.image_size = 48;
    c.lr = 0.25f;
    c.weights = {0.2f, 3.0f, 10.0f};
    c.strategy = AggregationStrategy::BFA;
    c.seed = 99;
    c.batch_size = 2;
    c.checkpoint_every = 5;
    c.log_path = "/tmp/log";
    c.stem_width = 8;
    c.loss_weights_manifest = "/tmp/phi.json";
    c.reshuffle_per_epoch = true;

    auto back = config_from_json(config_to_json(c));
    CHECK(back.data_dir == c.data_dir);
    CHECK(back.out_path == c.out_path);
    CHECK(back.epochs == c.epochs);
    CHECK(back.image_size == c.image_size);
    CHECK(back.lr == c.lr);
    CHECK(back.weights.alpha == c.weights.alpha);
    CHECK(back.weights.beta == c.weights.beta);
    CHECK(back.weights.gamma == c.weights.gamma);
    CHECK(back.strategy == c.strategy);
    CHECK(back.seed == c.seed);
    CHECK(back.batch_size == c.batch_size);
    CHECK(back.checkpoint_every == c.checkpoint_every);
    CHECK(back.log_path == c.log_path);
    CHECK(back.stem_width == c.stem_width);
    CHECK(back.loss_weights_manifest == c.loss_weights_manifest);
    CHECK(back.reshuffle_per_epoch == c.reshuffle_per_epoch);
}

TEST_CASE("config validation") {
    TrainConfig c;
    c.image_size = 20;
    CHECK_THROWS(c.validate());
    c.image_size = 32;
    c.epochs = 0;
    CHECK_THROWS(c.validate());
    c.epochs = 1;
    c.lr = 0.0f;
    CHECK_THROWS(c.validate());
    c.lr = 1e-4f;
    c.weights.alpha = -1.0f;
    CHECK_THROWS(c.validate());
    c.weights.alpha = 0.8f;
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("split_dataset is deterministic and covers all images") {
    const auto dir = temp_dir("split");
    make_dataset(dir, 6);

    auto [c1, s1] = split_dataset(dir.string(), 4);
    auto [c2, s2] = split_dataset(dir.string(), 4);
    CHECK(c1 == c2);
    CHECK(s1 == s2);
    CHECK(c1.size() == 3);
    CHECK(s1.size() == 3);

    std::set<std::string> all(c1.begin(), c1.end());
    all.insert(s1.begin(), s1.end());
    CHECK(all.size() == 6);

    auto [c3, s3] = split_dataset(dir.string(), 5);
    CHECK((c3 != c1 || s3 != s1));
    fs::remove_all(dir);
}

TEST_CASE("split_dataset drops the odd image out with a warning") {
    const auto dir = temp_dir("odd");
    make_dataset(dir, 5);
    std::ostringstream warn;
    auto [c, s] = split_dataset(dir.string(), 1, &warn);
    CHECK(c.size() == 2);
    CHECK(s.size() == 2);
    CHECK(warn.str().find("odd image count") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("split_dataset error cases") {
    CHECK_THROWS(split_dataset("/no/such/directory", 0));
    const auto dir = temp_dir("toofew");
    make_dataset(dir, 1);
    CHECK_THROWS(split_dataset(dir.string(), 0));
    fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto dir = temp_dir("ckpt");
    auto params = ModelParams::init(4, 3);
    TrainConfig config;
    config.stem_width = 4;
    config.out_path = (dir / "ckpt.json").string();

    // One optimizer step so the checkpoint carries adam state.
    AdamState adam;
    adam.lr = 1e-3f;
    auto list = params.tensors();
    Rng rng(8);
    for (auto& t : list) {
        t->ensure_grad();
        for (auto& g : t->grad) g = rng.uniform(-0.1f, 0.1f);
    }
    adam_step(list, adam);

    save_checkpoint(params, config, 17, &adam, 0xabcdef, config.out_path);
    auto loaded = load_checkpoint(config.out_path);
    CHECK(loaded.step == 17);
    CHECK(loaded.loss_network_hash == 0xabcdef);
    CHECK(loaded.config.stem_width == 4);
    REQUIRE(loaded.adam.has_value());
    CHECK(loaded.adam->t == 1);

    REQUIRE(loaded.params.items().size() == params.items().size());
    for (std::size_t i = 0; i < params.items().size(); ++i) {
        CHECK(loaded.params.items()[i].second->data == params.items()[i].second->data);
    }
    for (std::size_t i = 0; i < adam.m.size(); ++i) {
        CHECK(loaded.adam->m[i] == adam.m[i]);
        CHECK(loaded.adam->v[i] == adam.v[i]);
    }

    // Saving the loaded state again must reproduce identical files.
    const std::string again = (dir / "ckpt2.json").string();
    AdamState adam2 = *loaded.adam;
    TrainConfig config2 = loaded.config;
    save_checkpoint(loaded.params, config2, 17, &adam2, 0xabcdef, again);
    CHECK(slurp(dir / "ckpt.json.blob") == slurp(dir / "ckpt2.json.blob"));
    fs::remove_all(dir);
}

TEST_CASE("checkpoint without optimizer state") {
    const auto dir = temp_dir("ckpt_noopt");
    auto params = ModelParams::init(4, 3);
    TrainConfig config;
    config.stem_width = 4;
    const std::string path = (dir / "ckpt.json").string();
    save_checkpoint(params, config, 0, nullptr, 1, path);
    auto loaded = load_checkpoint(path);
    CHECK_FALSE(loaded.adam.has_value());
    fs::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects tampered manifests") {
    const auto dir = temp_dir("ckpt_bad");
    auto params = ModelParams::init(4, 3);
    TrainConfig config;
    config.stem_width = 4;
    const std::string path = (dir / "ckpt.json").string();
    save_checkpoint(params, config, 0, nullptr, 1, path);

    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "nope.json").string()),
                         doctest::Contains("missing checkpoint"), std::runtime_error);

    auto tamper = [&](auto mutate, const char* what) {
        json j = json::parse(slurp(path));
        mutate(j);
        const std::string mutated = (dir / "mutated.json").string();
        {
            std::ofstream f(mutated, std::ios::trunc);
            f << j.dump(2) << "\n";
        }
        // The blob sits next to the manifest under the manifest's name.
        fs::copy_file(path + ".blob", mutated + ".blob",
                      fs::copy_options::overwrite_existing);
        CHECK_THROWS_WITH_AS(load_checkpoint(mutated), doctest::Contains(what),
                             std::runtime_error);
    };

    tamper([](json& j) { j["format"] = "something"; }, "not a checkpoint");
    tamper([](json& j) { j["version"] = 2; }, "version mismatch");
    tamper([](json& j) { j["params"].erase(0); }, "missing parameter");
    tamper([](json& j) { j["params"][0]["shape"] = {1, 1, 1, 1}; }, "wrong shape");
    fs::remove_all(dir);
}

TEST_CASE("a short training run logs steps and saves a loadable checkpoint") {
    const auto dir = temp_dir("run");
    const auto data = dir / "data";
    fs::create_directories(data);
    make_dataset(data, 2);

    auto config = tiny_config(data, dir / "ckpt.json", dir / "log.jsonl");
    auto result = train(config);
    CHECK(result.steps == 2);  // one pair, two epochs
    CHECK(result.checkpoint_path == config.out_path);
    CHECK(std::isfinite(result.final_report.total));

    const auto lines = step_lines(dir / "log.jsonl");
    REQUIRE(lines.size() == 2);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const json j = json::parse(lines[i]);
        CHECK(j.at("step").get<long long>() == static_cast<long long>(i));
        for (const char* key : {"total", "style", "content", "ssim"}) {
            CHECK(j.at(key).is_number());
        }
        CHECK(j.at("per_tap").size() == 4);
    }

    auto ckpt = load_checkpoint(config.out_path);
    CHECK(ckpt.step == 2);
    REQUIRE(ckpt.adam.has_value());
    CHECK(ckpt.adam->t == 2);
    fs::remove_all(dir);
}

TEST_CASE("same seed and data give bit-identical runs") {
    const auto dir = temp_dir("repro");
    const auto data = dir / "data";
    fs::create_directories(data);
    make_dataset(data, 4);

    auto c1 = tiny_config(data, dir / "a.json", dir / "a.log");
    auto c2 = tiny_config(data, dir / "b.json", dir / "b.log");
    train(c1);
    train(c2);

    CHECK(slurp(dir / "a.json.blob") == slurp(dir / "b.json.blob"));
    CHECK(step_lines(dir / "a.log") == step_lines(dir / "b.log"));
    fs::remove_all(dir);
}

TEST_CASE("resuming reproduces an uninterrupted run bit for bit") {
    const auto dir = temp_dir("resume");
    const auto data = dir / "data";
    fs::create_directories(data);
    make_dataset(data, 4);

    // Straight two-epoch run.
    auto full = tiny_config(data, dir / "full.json", dir / "full.log");
    train(full);

    // One epoch, then resume to the same total.
    auto first = tiny_config(data, dir / "half.json", dir / "half.log");
    first.epochs = 1;
    train(first);
    auto second = tiny_config(data, dir / "resumed.json", dir / "resumed.log");
    second.resume = first.out_path;
    auto result = train(second);
    CHECK(result.steps == 2);  // two pairs, resumed at step 2 of 4

    CHECK(slurp(dir / "full.json.blob") == slurp(dir / "resumed.json.blob"));
    fs::remove_all(dir);
}

TEST_CASE("resume rejects a mismatched stem width") {
    const auto dir = temp_dir("resume_bad");
    const auto data = dir / "data";
    fs::create_directories(data);
    make_dataset(data, 2);

    auto first = tiny_config(data, dir / "ckpt.json", dir / "log");
    first.epochs = 1;
    train(first);

    auto second = tiny_config(data, dir / "ckpt2.json", dir / "log2");
    second.resume = first.out_path;
    second.stem_width = 8;
    CHECK_THROWS_WITH_AS(train(second), doctest::Contains("stem width"), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("undecodable images are skipped with a logged warning") {
    const auto dir = temp_dir("undecodable");
    const auto data = dir / "data";
    fs::create_directories(data);
    make_dataset(data, 4);
    {
        std::ofstream f(data / "broken.png", std::ios::binary);
        f << "\x89PNG\r\n";  // wrong signature tail, undecodable
    }
    // 5 files: one is dropped by the odd-count rule, and if the broken one
    // survives the split it must be skipped at load time.
    auto config = tiny_config(data, dir / "ckpt.json", dir / "log.jsonl");
    auto result = train(config);
    CHECK(result.steps >= 2);
    CHECK(fs::exists(dir / "ckpt.json"));
    fs::remove_all(dir);
}

TEST_CASE("reshuffling changes the pairing order across epochs") {
    const auto dir = temp_dir("reshuffle");
    const auto data = dir / "data";
    fs::create_directories(data);
    make_dataset(data, 8);

    auto config = tiny_config(data, dir / "ckpt.json", dir / "log.jsonl");
    config.epochs = 2;
    config.reshuffle_per_epoch = true;
    auto result = train(config);
    CHECK(result.steps == 8);  // 4 pairs x 2 epochs

    // Determinism must hold with reshuffling enabled too.
    auto config2 = tiny_config(data, dir / "ckpt2.json", dir / "log2.jsonl");
    config2.epochs = 2;
    config2.reshuffle_per_epoch = true;
    train(config2);
    CHECK(slurp(dir / "ckpt.json.blob") == slurp(dir / "ckpt2.json.blob"));
    fs::remove_all(dir);
}
