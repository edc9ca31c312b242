#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace umfa {

// Parameter blobs are raw little-endian 32-bit floats, row-major in
// (n, c, h, w) order. Shapes live in the accompanying manifest.

void write_blob(const std::string& path, const std::vector<std::vector<float>>& chunks);

/// Reads `count` floats starting at byte `offset`. Throws "truncated blob"
/// if the file is too short.
std::vector<float> read_blob(const std::string& path, std::uint64_t offset,
                             std::size_t count);

std::uint64_t blob_size(const std::string& path);

/// FNV-1a 64-bit over the raw bytes of all chunks in order.
std::uint64_t fnv1a(const std::vector<std::vector<float>>& chunks);

}  // namespace umfa
