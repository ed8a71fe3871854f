#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "nglod/field.hpp"
#include "nglod/octree.hpp"

namespace nglod {

// Model file layout, all little-endian:
//   "NGLD" | u32 version
//   header:   u32 r0, u32 max_level, u32 feature_dim, u32 hidden_dim,
//             u32 depth_count, u32 voxel_count[depth_count], u32 corner_count
//   octree:   per depth: u64 morton[n], u32 parent[n], and from feature level
//             0 on, u32 corners[n][8]
//   features: f32 [corner_count][feature_dim]
//   decoders: per LOD: f32 w1[h][3+m], b1[h], w2[h], b2
//   u32 CRC-32 of every preceding byte

inline constexpr std::uint32_t kModelVersion = 1;

struct Model {
    SparseVoxelOctree octree;
    NeuralField field;

    bool operator==(const Model&) const = default;
};

std::vector<std::uint8_t> encode_model(const Model& model);
/// Throws FormatError on a bad magic, version, size or checksum, and on
/// octree contents that fail structural validation.
Model decode_model(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::filesystem::path& path);
/// With max_lod set, drops every level above it (octree, corner features and
/// decoders). Throws RangeError when max_lod is outside [1, L_max].
Model load_model(const std::filesystem::path& path, std::optional<int> max_lod = std::nullopt);

/// The same model restricted to LODs 1..max_lod.
Model truncate_model(const Model& model, int max_lod);

/// Exact size in bytes of encode_model(model).
std::size_t serialized_size(const Model& model);

}  // namespace nglod
