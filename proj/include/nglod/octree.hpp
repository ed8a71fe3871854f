#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nglod/sdf.hpp"
#include "nglod/vec3.hpp"

namespace nglod {

// ---------------------------------------------------------------------------
// Morton codes. Bit 3k holds bit k of x, 3k+1 of y, 3k+2 of z.

inline constexpr int kMortonBits = 21;

/// Throws RangeError when a coordinate needs more than 21 bits.
std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z);
std::array<std::uint32_t, 3> morton_decode(std::uint64_t code);

// ---------------------------------------------------------------------------
// Boxes and rays

struct Aabb {
    Vec3 min;
    Vec3 max;

    bool contains(const Vec3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
    }
    Vec3 center() const { return (min + max) * 0.5; }

    bool operator==(const Aabb&) const = default;
};

inline constexpr Aabb kUnitBox{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};

struct RayInterval {
    double t_enter = 0.0;
    double t_exit = 0.0;
};

/// Slab test for t >= 0. An origin inside the box yields t_enter = 0. Boxes are
/// closed, so grazing rays register as hits.
std::optional<RayInterval> ray_aabb(const Ray& ray, const Aabb& box);

// ---------------------------------------------------------------------------
// Sparse voxel octree
//
// The tree is stored by depth d = 0..D where depth d has resolution 2^d over
// B = [-1,1]^3. Feature levels start at the initial resolution r0 = 2^base:
// feature level l lives at depth base + l and has resolution r0 * 2^l. The
// depths above level 0 carry no features and only serve traversal.

struct OctreeDepth {
    std::uint32_t resolution = 1;
    std::vector<std::uint64_t> morton;      // strictly ascending
    std::vector<std::uint32_t> parent;      // index into depth - 1 (0 at the root)
    std::vector<std::uint32_t> child_begin; // index of the first occupied child in depth + 1
    std::vector<std::uint8_t> child_mask;   // bit c set when octant c is occupied
    /// 8 shared corner indices per voxel, corner c at offset (c&1, (c>>1)&1, (c>>2)&1).
    /// Empty above feature level 0.
    std::vector<std::array<std::uint32_t, 8>> corners;

    std::size_t size() const { return morton.size(); }
    std::uint32_t num_children(std::size_t v) const;

    bool operator==(const OctreeDepth&) const = default;
};

inline constexpr std::uint32_t kNoVoxel = 0xffffffffu;

class SparseVoxelOctree {
public:
    SparseVoxelOctree() = default;

    /// Assembles an octree from per-depth Morton and corner lists (parents and
    /// child links are recomputed) and checks every structural invariant.
    /// Throws StructuralError on violations.
    static SparseVoxelOctree from_depths(std::uint32_t r0, int max_level, std::vector<OctreeDepth> depths);

    std::uint32_t initial_resolution() const { return r0_; }
    int base_depth() const { return base_depth_; }
    int max_level() const { return max_level_; }
    int depth_count() const { return static_cast<int>(depths_.size()); }
    int finest_depth() const { return depth_count() - 1; }
    int depth_of_level(int level) const { return base_depth_ + level; }

    const OctreeDepth& depth(int d) const { return depths_.at(static_cast<std::size_t>(d)); }
    const OctreeDepth& level(int l) const { return depth(depth_of_level(l)); }

    std::size_t voxel_count(int l) const { return level(l).size(); }
    /// Voxels over all feature levels 0..max_level.
    std::size_t feature_voxel_count() const;
    std::uint32_t corner_count() const { return corner_count_; }
    /// First feature index of each level's corners; size max_level + 2.
    const std::vector<std::uint32_t>& corner_offsets() const { return corner_offsets_; }

    Aabb voxel_box(int depth, std::uint32_t index) const;
    double voxel_edge(int depth) const { return 2.0 / static_cast<double>(depths_[static_cast<std::size_t>(depth)].resolution); }
    /// Bounds of the finest-level occupied voxels.
    const Aabb& occupied_bounds() const { return occupied_bounds_; }

    /// Voxel at `level` containing x (half-open cells, ties go to the larger
    /// index), or nullopt when that voxel is not occupied. Throws RangeError if
    /// x is outside B.
    std::optional<std::uint32_t> locate(const Vec3& x, int level) const;

    /// Walks from the root towards x down to at most `max_depth`, writing the
    /// voxel index of every depth visited into chain[0..]. Returns the deepest
    /// depth reached (>= 0 since the root always exists). x must be in B.
    int descend(const Vec3& x, int max_depth, std::span<std::uint32_t> chain) const;

    /// Linear-scan containment, independent of the Morton search. Testing aid.
    std::optional<std::uint32_t> locate_linear(const Vec3& x, int level) const;

    bool operator==(const SparseVoxelOctree&) const = default;

private:
    std::uint32_t r0_ = 4;
    int base_depth_ = 2;
    int max_level_ = 0;
    std::vector<OctreeDepth> depths_;
    std::vector<std::uint32_t> corner_offsets_;
    std::uint32_t corner_count_ = 0;
    Aabb occupied_bounds_{};
};

/// Integer cell of x at the given resolution with half-open cells [lo, hi),
/// except that the upper face of B maps to the last cell.
std::array<std::uint32_t, 3> cell_of(const Vec3& x, std::uint32_t resolution);

/// Builds the octree top-down. At every depth a child of an occupied voxel is
/// kept when it contains one of `surface_samples` or, if an oracle is given,
/// when |oracle(center)| <= half diagonal. Corner indices are deduplicated per
/// level on the shared lattice. Throws StructuralError when the finest level
/// ends up empty.
SparseVoxelOctree build_octree(const DistanceOracle* oracle, int max_level, std::span<const Vec3> surface_samples,
                               std::uint32_t r0 = 4);

/// Storage estimate M = (m + 1) * |V| bytes, |V| counted over all feature levels.
std::size_t storage_bytes(const SparseVoxelOctree& svo, int feature_dim);

}  // namespace nglod
