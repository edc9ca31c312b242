#include "umfa/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <png.h>

namespace umfa {

namespace {

TensorPtr from_rgb_bytes(const unsigned char* bytes, int h, int w, int channels) {
    auto t = Tensor::zeros({1, 3, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const unsigned char* px = bytes + (static_cast<std::size_t>(y) * w + x) * channels;
            for (int c = 0; c < 3; ++c) {
                t->at(0, c, y, x) = static_cast<float>(px[c]) / 255.0f;
            }
        }
    }
    return t;
}

TensorPtr load_ppm(const std::string& path, std::ifstream& f) {
    f.seekg(0);
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        // skip whitespace and '#' comments
        while (pos < raw.size()) {
            if (std::isspace(static_cast<unsigned char>(raw[pos]))) {
                ++pos;
            } else if (raw[pos] == '#') {
                while (pos < raw.size() && raw[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        std::string tok;
        while (pos < raw.size() && !std::isspace(static_cast<unsigned char>(raw[pos]))) {
            tok += raw[pos++];
        }
        return tok;
    };

    if (next_token() != "P6") {
        throw std::runtime_error("unsupported format: " + path + " is not a binary P6 PPM");
    }
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw std::runtime_error("corrupt header in PPM file " + path);
    }
    if (w < 1 || h < 1) throw std::runtime_error("corrupt header in PPM file " + path);
    if (maxval != 255) {
        throw std::runtime_error("unsupported format: PPM maxval " + std::to_string(maxval) +
                                 " in " + path + " (only 255)");
    }
    ++pos;  // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (raw.size() < pos + need) {
        throw std::runtime_error("truncated pixel data in PPM file " + path);
    }
    return from_rgb_bytes(reinterpret_cast<const unsigned char*>(raw.data() + pos), h, w, 3);
}

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

TensorPtr load_png(const std::string& path) {
    PngReadCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw std::runtime_error("cannot open image file " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw std::runtime_error("libpng init failed");
    if (setjmp(png_jmpbuf(ctx.png))) {
        throw std::runtime_error("truncated pixel data or corrupt PNG stream in " + path);
    }
    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);

    const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
    const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
    const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
    const int color_type = png_get_color_type(ctx.png, ctx.info);
    if (bit_depth == 16) {
        throw std::runtime_error("unsupported format: 16-bit PNG " + path);
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        if (bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
        png_set_gray_to_rgb(ctx.png);
    }
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const int channels = png_get_channels(ctx.png, ctx.info);
    if (channels != 3 && channels != 4) {
        throw std::runtime_error("unsupported format: PNG with " + std::to_string(channels) +
                                 " channels in " + path);
    }
    std::vector<unsigned char> pixels(static_cast<std::size_t>(w) * h * channels);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * channels;
    }
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);
    return from_rgb_bytes(pixels.data(), static_cast<int>(h), static_cast<int>(w), channels);
}

const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

}  // namespace

TensorPtr load_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open image file " + path);
    unsigned char head[8] = {};
    f.read(reinterpret_cast<char*>(head), 8);
    const std::size_t got = static_cast<std::size_t>(f.gcount());
    if (got >= 8 && std::memcmp(head, kPngSig, 8) == 0) {
        f.close();
        return load_png(path);
    }
    if (got >= 2 && head[0] == 'P' && head[1] == '6') {
        f.clear();
        return load_ppm(path, f);
    }
    throw std::runtime_error("unsupported format: " + path +
                             " is neither PNG nor binary P6 PPM");
}

void save_image(const TensorPtr& image, const std::string& path) {
    const Shape& s = image->shape;
    if (s.n != 1 || s.c != 3) {
        throw std::invalid_argument("save_image expects a (1,3,H,W) tensor, got " + s.str());
    }
    std::vector<unsigned char> bytes(static_cast<std::size_t>(s.h) * s.w * 3);
    for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(image->at(0, c, y, x), 0.0f, 1.0f);
                bytes[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }

    if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm") {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write image file " + path);
        f << "P6\n" << s.w << " " << s.h << "\n255\n";
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        if (!f) throw std::runtime_error("failed writing image file " + path);
        return;
    }

    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot write image file " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw std::runtime_error("failed writing PNG file " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, s.w, s.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < s.h; ++y) {
        png_write_row(png, bytes.data() + static_cast<std::size_t>(y) * s.w * 3);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

namespace {

// Half-pixel-center bilinear resample of one plane.
void bilinear_plane(const float* src, int h, int w, float* dst, int nh, int nw) {
    const double sy = static_cast<double>(h) / nh;
    const double sx = static_cast<double>(w) / nw;
    for (int dy = 0; dy < nh; ++dy) {
        double fy = (dy + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double ty = fy - y0;
        for (int dx = 0; dx < nw; ++dx) {
            double fx = (dx + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double tx = fx - x0;
            const double top = src[y0 * w + x0] * (1.0 - tx) + src[y0 * w + x1] * tx;
            const double bot = src[y1 * w + x0] * (1.0 - tx) + src[y1 * w + x1] * tx;
            dst[dy * nw + dx] = static_cast<float>(top * (1.0 - ty) + bot * ty);
        }
    }
}

}  // namespace

TensorPtr resize_center(const TensorPtr& image, int target) {
    const Shape& s = image->shape;
    if (s.h < 2 || s.w < 2) {
        throw std::invalid_argument("resize_center: degenerate input " + s.str());
    }
    if (target < 16) throw std::invalid_argument("resize_center: target must be >= 16");

    if (s.h == target && s.w == target) {
        return Tensor::from_data(s, image->data);
    }

    int nh, nw;
    if (s.h <= s.w) {
        nh = target;
        nw = std::max(target, static_cast<int>(
                                  std::lround(static_cast<double>(s.w) * target / s.h)));
    } else {
        nw = target;
        nh = std::max(target, static_cast<int>(
                                  std::lround(static_cast<double>(s.h) * target / s.w)));
    }

    auto scaled = Tensor::zeros({s.n, s.c, nh, nw});
    if (nh == s.h && nw == s.w) {
        scaled->data = image->data;
    } else {
        for (int in = 0; in < s.n; ++in) {
            for (int c = 0; c < s.c; ++c) {
                bilinear_plane(image->data.data() + image->index(in, c, 0, 0), s.h, s.w,
                               scaled->data.data() + scaled->index(in, c, 0, 0), nh, nw);
            }
        }
    }

    const int oy = (nh - target) / 2;
    const int ox = (nw - target) / 2;
    auto out = Tensor::zeros({s.n, s.c, target, target});
    for (int in = 0; in < s.n; ++in) {
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < target; ++y) {
                std::copy_n(
                    scaled->data.data() + scaled->index(in, c, oy + y, ox), target,
                    out->data.data() + out->index(in, c, y, 0));
            }
        }
    }
    return out;
}

}  // namespace umfa
