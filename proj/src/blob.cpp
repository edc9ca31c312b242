#include "umfa/blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "blob format is little-endian; big-endian hosts are unsupported");

namespace umfa {

void write_blob(const std::string& path, const std::vector<std::vector<float>>& chunks) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open blob file for writing: " + path);
    for (const auto& chunk : chunks) {
        f.write(reinterpret_cast<const char*>(chunk.data()),
                static_cast<std::streamsize>(chunk.size() * sizeof(float)));
    }
    if (!f) throw std::runtime_error("failed writing blob file: " + path);
}

std::vector<float> read_blob(const std::string& path, std::uint64_t offset,
                             std::size_t count) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("missing blob file: " + path);
    f.seekg(0, std::ios::end);
    const std::uint64_t size = static_cast<std::uint64_t>(f.tellg());
    if (offset + count * sizeof(float) > size) {
        throw std::runtime_error("truncated blob: " + path + " (need " +
                                 std::to_string(offset + count * sizeof(float)) +
                                 " bytes, have " + std::to_string(size) + ")");
    }
    f.seekg(static_cast<std::streamoff>(offset));
    std::vector<float> out(count);
    f.read(reinterpret_cast<char*>(out.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
    if (!f) throw std::runtime_error("truncated blob: " + path);
    return out;
}

std::uint64_t blob_size(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("missing blob file: " + path);
    f.seekg(0, std::ios::end);
    return static_cast<std::uint64_t>(f.tellg());
}

std::uint64_t fnv1a(const std::vector<std::vector<float>>& chunks) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& chunk : chunks) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(chunk.data());
        const std::size_t len = chunk.size() * sizeof(float);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace umfa
