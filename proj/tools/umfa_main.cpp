#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "umfa/gradcheck.hpp"
#include "umfa/image_io.hpp"
#include "umfa/losses.hpp"
#include "umfa/metrics.hpp"
#include "umfa/net.hpp"
#include "umfa/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int nearest_valid_size(int size) {
    const int lo = size / 16 * 16;
    const int hi = lo + 16;
    return (size - lo <= hi - size && lo >= 16) ? lo : hi;
}

umfa::LossNetwork make_phi(const std::string& manifest, std::uint64_t seed) {
    return manifest.empty() ? umfa::LossNetwork::seeded_random(seed)
                            : umfa::LossNetwork::load_weights(manifest);
}

void echo_config(const json& j) { std::cerr << "config: " << j.dump() << "\n"; }

int cmd_train(const umfa::TrainConfig& config) {
    echo_config(json::parse(umfa::config_to_json(config)));
    auto result = umfa::train(config);
    std::cerr << "trained " << result.steps << " steps, checkpoint at "
              << result.checkpoint_path << "\n";
    return 0;
}

int cmd_stylize(const std::string& model, const std::string& content_path,
                const std::string& style_path, const std::string& out_path, int size,
                const std::string& agg) {
    echo_config({{"command", "stylize"}, {"model", model}, {"content", content_path},
                 {"style", style_path}, {"out", out_path}, {"size", size}, {"agg", agg}});
    auto ckpt = umfa::load_checkpoint(model);
    const auto strategy = agg.empty() ? ckpt.config.strategy : umfa::parse_strategy(agg);

    auto content = umfa::load_image(content_path);
    auto style = umfa::load_image(style_path);
    if (size > 0) {
        if (size % 16 != 0) {
            throw std::invalid_argument("--size " + std::to_string(size) +
                                        " is not divisible by 16; try " +
                                        std::to_string(nearest_valid_size(size)));
        }
        content = umfa::resize_center(content, size);
        style = umfa::resize_center(style, size);
    } else {
        for (const auto& [name, img] : {std::pair{"content", content}, {"style", style}}) {
            if (img->shape.h % 16 != 0 || img->shape.w % 16 != 0) {
                throw std::invalid_argument(
                    std::string(name) + " image is " + std::to_string(img->shape.w) + "x" +
                    std::to_string(img->shape.h) +
                    ", not divisible by 16; pass --size " +
                    std::to_string(nearest_valid_size(std::min(img->shape.h, img->shape.w))));
            }
        }
    }

    umfa::Tape tape = umfa::Tape::inference();
    auto output = umfa::stylize(tape, content, style, ckpt.params, strategy);
    umfa::save_image(output, out_path);
    std::cerr << "wrote " << out_path << " (" << output->shape.w << "x" << output->shape.h
              << ")\n";
    return 0;
}

int cmd_eval(const std::string& content_path, const std::string& style_path,
             const std::string& output_path, const std::string& dir,
             const std::string& loss_weights, std::uint64_t seed) {
    echo_config({{"command", "eval"}, {"content", content_path}, {"style", style_path},
                 {"output", output_path}, {"dir", dir}, {"loss_weights", loss_weights},
                 {"seed", seed}});
    auto phi = make_phi(loss_weights, seed);

    auto eval_one = [&](const std::string& c, const std::string& s, const std::string& o) {
        return umfa::evaluate(umfa::load_image(c), umfa::load_image(s), umfa::load_image(o),
                              phi);
    };

    if (dir.empty()) {
        const auto r = eval_one(content_path, style_path, output_path);
        std::cout << json({{"ssim", r.ssim}, {"gram_loss", r.gram_loss}}).dump() << "\n";
        return 0;
    }

    // Directory mode: triples named <id>.content.*, <id>.style.*, <id>.output.*
    std::map<std::string, std::map<std::string, std::string>> triples;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string stem = entry.path().stem().string();  // "<id>.role"
        const auto dot = stem.rfind('.');
        if (dot == std::string::npos) continue;
        triples[stem.substr(0, dot)][stem.substr(dot + 1)] = entry.path().string();
    }
    double ssim_sum = 0.0, gram_sum = 0.0;
    int count = 0;
    for (const auto& [id, roles] : triples) {
        if (!roles.count("content") || !roles.count("style") || !roles.count("output")) {
            std::cerr << "warning: incomplete triple '" << id << "' skipped\n";
            continue;
        }
        const auto r = eval_one(roles.at("content"), roles.at("style"), roles.at("output"));
        ssim_sum += r.ssim;
        gram_sum += r.gram_loss;
        ++count;
    }
    if (count == 0) throw std::runtime_error("no complete triples found in " + dir);
    std::cout << json({{"ssim", ssim_sum / count},
                       {"gram_loss", gram_sum / count},
                       {"count", count}})
                     .dump()
              << "\n";
    return 0;
}

int cmd_bench(const std::string& model, const std::vector<int>& sizes, std::uint64_t seed) {
    echo_config({{"command", "bench"}, {"model", model}, {"sizes", sizes}, {"seed", seed}});
    auto ckpt = umfa::load_checkpoint(model);
    const auto rows = umfa::bench(ckpt.params, ckpt.config.strategy, sizes, seed);

    std::cout << "size    median_s  runs  threads\n";
    json jrows = json::array();
    for (const auto& row : rows) {
        std::printf("%-7d %.4f    %-5d %d\n", row.size, row.median_s, row.runs,
                    row.thread_count);
        jrows.push_back({{"size", row.size},
                         {"median_s", row.median_s},
                         {"runs", row.runs},
                         {"thread_count", row.thread_count}});
    }
    std::cout << jrows.dump() << "\n";
    return 0;
}

int cmd_gradcheck() {
    echo_config({{"command", "gradcheck"}});
    const auto result = umfa::gradcheck::run_gradient_suite(std::cout);
    return result.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UMFA photorealistic style transfer"};
    app.require_subcommand(1);

    umfa::TrainConfig config;
    std::string agg = "mfa";
    auto* train = app.add_subcommand("train", "train a model on an image directory");
    train->add_option("--data", config.data_dir, "image directory")->required();
    train->add_option("--out", config.out_path, "checkpoint output path")->required();
    train->add_option("--epochs", config.epochs, "training epochs");
    train->add_option("--size", config.image_size, "training image size");
    train->add_option("--lr", config.lr, "learning rate (constant)");
    train->add_option("--alpha", config.weights.alpha, "style weight");
    train->add_option("--beta", config.weights.beta, "content weight");
    train->add_option("--gamma", config.weights.gamma, "ssim weight");
    train->add_option("--agg", agg, "aggregation strategy")
        ->check(CLI::IsMember({"mfa", "bfa", "none"}));
    train->add_option("--seed", config.seed, "rng seed");
    train->add_option("--log", config.log_path, "training log path (JSON lines)");
    train->add_option("--loss-weights", config.loss_weights_manifest,
                      "loss-network weight manifest (default: seeded random)");
    train->add_option("--stem-width", config.stem_width, "encoder stem width");
    train->add_option("--batch-size", config.batch_size, "images per step");
    train->add_option("--checkpoint-every", config.checkpoint_every,
                      "steps between periodic checkpoints");
    train->add_option("--resume", config.resume, "checkpoint to continue from");
    train->add_flag("--reshuffle", config.reshuffle_per_epoch, "reshuffle pairs per epoch");

    std::string model, content, style, output, out_path, dir, loss_weights;
    int size = 0;
    std::uint64_t seed = 0;
    std::string sty_agg;
    auto* stylize = app.add_subcommand("stylize", "stylize a content image");
    stylize->add_option("--model", model, "checkpoint")->required();
    stylize->add_option("--content", content, "content image")->required();
    stylize->add_option("--style", style, "style image")->required();
    stylize->add_option("--out", out_path, "output image")->required();
    stylize->add_option("--size", size, "resize both inputs to this square size");
    stylize->add_option("--agg", sty_agg, "override aggregation strategy")
        ->check(CLI::IsMember({"mfa", "bfa", "none"}));

    auto* eval = app.add_subcommand("eval", "score an output against content and style");
    eval->add_option("--content", content, "content image");
    eval->add_option("--style", style, "style image");
    eval->add_option("--output", output, "stylized output image");
    eval->add_option("--dir", dir, "directory of <id>.{content,style,output}.* triples");
    eval->add_option("--loss-weights", loss_weights, "loss-network weight manifest");
    eval->add_option("--seed", seed, "loss-network seed when no manifest is given");

    std::vector<int> sizes = {256, 512, 1024};
    auto* bench = app.add_subcommand("bench", "stylization runtime per image size");
    bench->add_option("--model", model, "checkpoint")->required();
    bench->add_option("--sizes", sizes, "image sizes")->delimiter(',');
    bench->add_option("--seed", seed, "rng seed for the benchmark images");

    auto* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) {
            config.strategy = umfa::parse_strategy(agg);
            return cmd_train(config);
        }
        if (stylize->parsed()) return cmd_stylize(model, content, style, out_path, size, sty_agg);
        if (eval->parsed()) return cmd_eval(content, style, output, dir, loss_weights, seed);
        if (bench->parsed()) return cmd_bench(model, sizes, seed);
        if (gradcheck->parsed()) return cmd_gradcheck();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
