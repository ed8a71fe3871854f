#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "nglod/octree.hpp"
#include "nglod/vec3.hpp"

namespace nglod {

struct RayBundle {
    std::vector<Vec3> origins;
    std::vector<Vec3> directions;  // unit length

    std::size_t size() const { return origins.size(); }
    Ray ray(std::size_t i) const { return {origins[i], directions[i]}; }
    void push_back(const Ray& r) {
        origins.push_back(r.origin);
        directions.push_back(r.direction);
    }

    /// Throws UsageError on size mismatch or a direction that is not unit length.
    void validate() const;
};

struct RayVoxelPair {
    std::uint32_t ray = 0;
    std::uint32_t voxel = 0;

    bool operator==(const RayVoxelPair&) const = default;
};

/// Working set of (ray, voxel) proposals at one octree depth.
struct RayVoxelPairList {
    int depth = 0;
    std::vector<RayVoxelPair> pairs;

    std::size_t size() const { return pairs.size(); }
};

/// D_t = 0 when ray misses voxel; otherwise 1 at the final depth and the
/// voxel's number of occupied children before it.
std::vector<std::uint32_t> decide(const RayBundle& rays, const RayVoxelPairList& pairs, const SparseVoxelOctree& svo,
                                  bool final_depth);

/// Exclusive prefix sum as a blocked parallel up-sweep/down-sweep scan.
std::vector<std::uint64_t> exclusive_sum(std::span<const std::uint32_t> values);
/// Plain loop; reference for exclusive_sum.
std::vector<std::uint64_t> exclusive_sum_serial(std::span<const std::uint32_t> values);

/// Octant of a direction: bit k set when component k is negative.
unsigned direction_octant(const Vec3& direction);

/// 8x8 table: row o lists the child octants front to back for rays whose
/// direction lies in octant o.
const std::array<std::array<std::uint8_t, 8>, 8>& child_order_table();

std::array<std::uint8_t, 8> ordered_children(const Vec3& direction);

/// Replaces every hit pair by its voxel's occupied children (front to back for
/// that ray) at offset S_t. Throws StructuralError when D and S are
/// inconsistent with the octree.
RayVoxelPairList subdivide(const RayVoxelPairList& pairs, std::span<const std::uint32_t> decisions,
                           std::span<const std::uint64_t> offsets, const SparseVoxelOctree& svo,
                           const RayBundle& rays);

/// Stable removal of pairs with D_t = 0. Decisions must be 0 or 1.
RayVoxelPairList compactify(const RayVoxelPairList& pairs, std::span<const std::uint32_t> decisions,
                            std::span<const std::uint64_t> offsets);

struct TraversalResult {
    /// Hit pairs at every depth from the root down to the final depth.
    std::vector<RayVoxelPairList> depths;
    /// Per final pair: entry and exit distance along the ray.
    std::vector<double> t_enter;
    std::vector<double> t_exit;
    /// Final pairs of ray i are [ray_begin[i], ray_begin[i + 1]).
    std::vector<std::uint32_t> ray_begin;
    int level = 0;

    const RayVoxelPairList& hits() const { return depths.back(); }
};

/// Breadth-first ray/octree intersection down to feature `level`. Final pairs
/// are grouped by ray and sorted front to back within each ray.
TraversalResult ray_trace_octree(const RayBundle& rays, const SparseVoxelOctree& svo, int level);

/// CSV dump (ray,level,morton,t_enter) of the hit lists at every depth.
void write_traversal_csv(const TraversalResult& result, const RayBundle& rays, const SparseVoxelOctree& svo,
                         std::ostream& out);

}  // namespace nglod
