#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "umfa/adam.hpp"
#include "umfa/losses.hpp"
#include "umfa/net.hpp"

namespace umfa {

struct TrainConfig {
    std::string data_dir;
    std::string out_path;       // checkpoint manifest path
    int epochs = 2;
    int image_size = 256;       // must be divisible by 16
    float lr = 1e-4f;           // constant
    LossWeights weights;
    AggregationStrategy strategy = AggregationStrategy::MFA;
    std::uint64_t seed = 0;
    int batch_size = 1;
    int checkpoint_every = 0;   // steps between periodic checkpoints; 0 = final only
    std::string log_path;       // empty = stdout
    int stem_width = 32;
    std::string loss_weights_manifest;  // empty = seeded-random loss network
    bool reshuffle_per_epoch = false;
    std::string resume;         // checkpoint to continue from

    void validate() const;
};

/// Deterministic seeded shuffle of the image files in `dir`; first half
/// becomes content, second half style. Odd counts drop the last file with
/// a warning on `warn`.
std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(
    const std::string& dir, std::uint64_t seed, std::ostream* warn = nullptr);

void save_checkpoint(const ModelParams& params, const TrainConfig& config, long long step,
                     const AdamState* adam, std::uint64_t loss_network_hash,
                     const std::string& path);

struct LoadedCheckpoint {
    ModelParams params;
    TrainConfig config;
    long long step = 0;
    std::uint64_t loss_network_hash = 0;
    std::optional<AdamState> adam;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

struct TrainResult {
    std::string checkpoint_path;
    LossReport final_report;
    long long steps = 0;
};

/// Full training loop: resize pair, stylize, total loss, backward, Adam.
/// One JSON log line per step; checkpoints per config.
TrainResult train(const TrainConfig& config);

// JSON (de)serialization of the config snapshot stored in checkpoints.
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

}  // namespace umfa
