#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>

#include "umfa/image_io.hpp"
#include "umfa/rng.hpp"
#include "umfa/tensor.hpp"

using namespace umfa;
namespace fs = std::filesystem;

namespace {

TensorPtr random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    auto t = Tensor::zeros({1, 3, h, w});
    for (auto& v : t->data) v = rng.unit();
    return t;
}

fs::path temp_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("umfa_imgio_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

double max_abs_diff(const TensorPtr& a, const TensorPtr& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a->numel(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a->data[i]) - b->data[i]));
    }
    return worst;
}

}  // namespace

TEST_CASE("ppm round trip stays within quantization error") {
    const auto dir = temp_dir("ppm");
    auto img = random_image(9, 13, 1);
    const std::string path = (dir / "img.ppm").string();
    save_image(img, path);
    auto back = load_image(path);
    REQUIRE(back->shape == img->shape);
    CHECK(max_abs_diff(img, back) <= 1.0 / 255.0);
    fs::remove_all(dir);
}

TEST_CASE("png round trip stays within quantization error") {
    const auto dir = temp_dir("png");
    auto img = random_image(12, 8, 2);
    const std::string path = (dir / "img.png").string();
    save_image(img, path);
    auto back = load_image(path);
    REQUIRE(back->shape == img->shape);
    CHECK(max_abs_diff(img, back) <= 1.0 / 255.0);
    fs::remove_all(dir);
}

TEST_CASE("saved values are clamped to [0, 1]") {
    const auto dir = temp_dir("clamp");
    auto img = Tensor::zeros({1, 3, 2, 2});
    std::fill(img->data.begin(), img->data.begin() + 4, -0.5f);   // channel 0
    std::fill(img->data.begin() + 4, img->data.begin() + 8, 1.5f);  // channel 1
    const std::string path = (dir / "img.ppm").string();
    save_image(img, path);
    auto back = load_image(path);
    for (int i = 0; i < 4; ++i) CHECK(back->data[i] == 0.0f);
    for (int i = 4; i < 8; ++i) CHECK(back->data[i] == 1.0f);
    fs::remove_all(dir);
}

TEST_CASE("save_image rejects non-image tensors") {
    const auto dir = temp_dir("badshape");
    CHECK_THROWS(save_image(Tensor::zeros({1, 1, 4, 4}), (dir / "x.ppm").string()));
    CHECK_THROWS(save_image(Tensor::zeros({2, 3, 4, 4}), (dir / "x.ppm").string()));
    fs::remove_all(dir);
}

TEST_CASE("loader error paths") {
    const auto dir = temp_dir("errors");
    CHECK_THROWS_WITH_AS(load_image((dir / "missing.png").string()),
                         doctest::Contains("cannot open"), std::runtime_error);

    write_file(dir / "garbage.img", "this is not an image");
    CHECK_THROWS_WITH_AS(load_image((dir / "garbage.img").string()),
                         doctest::Contains("neither PNG nor binary P6"), std::runtime_error);

    write_file(dir / "maxval.ppm", "P6\n2 2\n128\n" + std::string(12, 'x'));
    CHECK_THROWS_WITH_AS(load_image((dir / "maxval.ppm").string()),
                         doctest::Contains("maxval"), std::runtime_error);

    write_file(dir / "short.ppm", "P6\n4 4\n255\nxyz");
    CHECK_THROWS_WITH_AS(load_image((dir / "short.ppm").string()),
                         doctest::Contains("truncated"), std::runtime_error);

    write_file(dir / "header.ppm", "P6\nnope 2\n255\n" + std::string(12, 'x'));
    CHECK_THROWS_WITH_AS(load_image((dir / "header.ppm").string()),
                         doctest::Contains("corrupt header"), std::runtime_error);

    write_file(dir / "bad.png", std::string("\x89PNG\r\n\x1a\n", 8) + "truncated");
    CHECK_THROWS(load_image((dir / "bad.png").string()));
    fs::remove_all(dir);
}

TEST_CASE("ppm comments and whitespace are tolerated") {
    const auto dir = temp_dir("comments");
    std::string body(2 * 1 * 3, '\0');
    body[0] = static_cast<char>(255);
    write_file(dir / "c.ppm", "P6\n# a comment\n2 # inline\n1\n255\n" + body);
    auto img = load_image((dir / "c.ppm").string());
    REQUIRE(img->shape == Shape{1, 3, 1, 2});
    CHECK(img->at(0, 0, 0, 0) == 1.0f);
    CHECK(img->at(0, 1, 0, 0) == 0.0f);
    fs::remove_all(dir);
}

TEST_CASE("resize_center is a copy at the target size") {
    auto img = random_image(16, 16, 3);
    auto out = resize_center(img, 16);
    CHECK(out->data == img->data);
    CHECK(out.get() != img.get());
}

TEST_CASE("resize_center keeps constants constant") {
    auto img = Tensor::full({1, 3, 32, 48}, 0.375f);
    auto out = resize_center(img, 16);
    REQUIRE(out->shape == Shape{1, 3, 16, 16});
    for (float v : out->data) CHECK(v == doctest::Approx(0.375f).epsilon(1e-6));
}

TEST_CASE("resize_center on a horizontal ramp matches the closed form") {
    // v(x) = x is preserved exactly by bilinear interpolation, so the
    // output must be the (clamped) half-pixel source coordinate, shifted
    // by the center-crop offset.
    const int h = 32, w = 64, target = 16;
    auto img = Tensor::zeros({1, 3, h, w});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) img->at(0, c, y, x) = static_cast<float>(x);
        }
    }
    auto out = resize_center(img, target);
    REQUIRE(out->shape == Shape{1, 3, target, target});

    const int nw = w * target / h;  // 32: aspect-preserving scale, then center crop
    const int ox = (nw - target) / 2;
    const double sx = static_cast<double>(w) / nw;
    for (int x = 0; x < target; ++x) {
        const double fx = std::clamp((x + ox + 0.5) * sx - 0.5, 0.0, w - 1.0);
        CHECK(out->at(0, 0, 0, x) == doctest::Approx(fx).epsilon(1e-5));
        CHECK(out->at(0, 2, target - 1, x) == doctest::Approx(fx).epsilon(1e-5));
    }
}

TEST_CASE("resize_center argument validation") {
    CHECK_THROWS(resize_center(Tensor::zeros({1, 3, 1, 8}), 16));
    CHECK_THROWS(resize_center(Tensor::zeros({1, 3, 32, 32}), 8));
}
