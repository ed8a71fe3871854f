#include "nglod/traversal.hpp"

#include <bit>
#include <cmath>
#include <ostream>
#include <string>

#include "nglod/error.hpp"
#include "nglod/parallel.hpp"

namespace nglod {

namespace {

constexpr std::size_t kScanBlock = 4096;
constexpr std::size_t kPairGrain = 1024;

std::uint32_t child_index(const OctreeDepth& depth, std::size_t voxel, unsigned octant) {
    const unsigned mask = depth.child_mask[voxel];
    return depth.child_begin[voxel] + static_cast<std::uint32_t>(std::popcount(mask & ((1u << octant) - 1u)));
}

}  // namespace

void RayBundle::validate() const {
    if (origins.size() != directions.size()) throw UsageError("RayBundle: origins and directions differ in size");
    for (std::size_t i = 0; i < directions.size(); ++i) {
        if (!is_finite(origins[i]) || std::abs(length(directions[i]) - 1.0) > 1e-6) {
            throw UsageError("RayBundle: ray " + std::to_string(i) + " is not finite or not unit length");
        }
    }
}

std::vector<std::uint32_t> decide(const RayBundle& rays, const RayVoxelPairList& pairs, const SparseVoxelOctree& svo,
                                  bool final_depth) {
    std::vector<std::uint32_t> d(pairs.size());
    const OctreeDepth& depth = svo.depth(pairs.depth);
    parallel_for(pairs.size(), kPairGrain, [&](std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) {
            const auto& p = pairs.pairs[t];
            if (!ray_aabb(rays.ray(p.ray), svo.voxel_box(pairs.depth, p.voxel))) {
                d[t] = 0;
            } else {
                d[t] = final_depth ? 1u : depth.num_children(p.voxel);
            }
        }
    });
    return d;
}

std::vector<std::uint64_t> exclusive_sum_serial(std::span<const std::uint32_t> values) {
    std::vector<std::uint64_t> out(values.size());
    std::uint64_t acc = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = acc;
        acc += values[i];
    }
    return out;
}

std::vector<std::uint64_t> exclusive_sum(std::span<const std::uint32_t> values) {
    const std::size_t n = values.size();
    std::vector<std::uint64_t> out(n);
    if (n == 0) return out;
    const std::size_t blocks = (n + kScanBlock - 1) / kScanBlock;

    // Block totals padded to a power of two for the tree scan.
    std::vector<std::uint64_t> tree(std::bit_ceil(blocks), 0);
    for_each_block(n, kScanBlock, [&](std::size_t block, std::size_t begin, std::size_t end) {
        std::uint64_t s = 0;
        for (std::size_t i = begin; i < end; ++i) s += values[i];
        tree[block] = s;
    });

    const std::size_t m = tree.size();
    for (std::size_t stride = 1; stride < m; stride *= 2) {
        parallel_for(m / (2 * stride), 256, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) tree[(2 * i + 2) * stride - 1] += tree[(2 * i + 1) * stride - 1];
        });
    }
    tree[m - 1] = 0;
    for (std::size_t stride = m / 2; stride >= 1; stride /= 2) {
        parallel_for(m / (2 * stride), 256, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const std::size_t left = (2 * i + 1) * stride - 1;
                const std::size_t right = (2 * i + 2) * stride - 1;
                const std::uint64_t t = tree[left];
                tree[left] = tree[right];
                tree[right] += t;
            }
        });
    }

    for_each_block(n, kScanBlock, [&](std::size_t block, std::size_t begin, std::size_t end) {
        std::uint64_t acc = tree[block];
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = acc;
            acc += values[i];
        }
    });
    return out;
}

unsigned direction_octant(const Vec3& d) {
    return (d.x < 0.0 ? 1u : 0u) | (d.y < 0.0 ? 2u : 0u) | (d.z < 0.0 ? 4u : 0u);
}

const std::array<std::array<std::uint8_t, 8>, 8>& child_order_table() {
    // Along a ray the crossed mid-planes only ever flip an octant bit from the
    // near half to the far half, so ascending (k ^ octant) is front to back.
    static const auto table = [] {
        std::array<std::array<std::uint8_t, 8>, 8> t{};
        for (unsigned o = 0; o < 8; ++o) {
            for (unsigned k = 0; k < 8; ++k) t[o][k] = static_cast<std::uint8_t>(k ^ o);
        }
        return t;
    }();
    return table;
}

std::array<std::uint8_t, 8> ordered_children(const Vec3& direction) {
    return child_order_table()[direction_octant(direction)];
}

RayVoxelPairList subdivide(const RayVoxelPairList& pairs, std::span<const std::uint32_t> decisions,
                           std::span<const std::uint64_t> offsets, const SparseVoxelOctree& svo,
                           const RayBundle& rays) {
    if (decisions.size() != pairs.size() || offsets.size() != pairs.size()) {
        throw StructuralError("subdivide: decision/offset lists do not match the pair list");
    }
    if (pairs.depth + 1 >= svo.depth_count()) throw StructuralError("subdivide: already at the finest depth");
    RayVoxelPairList out;
    out.depth = pairs.depth + 1;
    if (pairs.size() == 0) return out;
    const std::uint64_t total = offsets.back() + decisions.back();
    out.pairs.resize(static_cast<std::size_t>(total));
    const OctreeDepth& depth = svo.depth(pairs.depth);
    const auto& table = child_order_table();

    std::atomic<bool> inconsistent{false};
    parallel_for(pairs.size(), kPairGrain, [&](std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) {
            if (decisions[t] == 0) continue;
            const auto& p = pairs.pairs[t];
            const unsigned mask = depth.child_mask[p.voxel];
            if (decisions[t] != static_cast<std::uint32_t>(std::popcount(mask)) || offsets[t] + decisions[t] > total) {
                inconsistent = true;
                continue;
            }
            std::uint64_t w = offsets[t];
            for (unsigned k : table[direction_octant(rays.directions[p.ray])]) {
                if (!(mask & (1u << k))) continue;
                out.pairs[static_cast<std::size_t>(w++)] = {p.ray, child_index(depth, p.voxel, k)};
            }
        }
    });
    if (inconsistent) throw StructuralError("subdivide: decisions disagree with the octree child counts");
    return out;
}

RayVoxelPairList compactify(const RayVoxelPairList& pairs, std::span<const std::uint32_t> decisions,
                            std::span<const std::uint64_t> offsets) {
    if (decisions.size() != pairs.size() || offsets.size() != pairs.size()) {
        throw StructuralError("compactify: decision/offset lists do not match the pair list");
    }
    RayVoxelPairList out;
    out.depth = pairs.depth;
    if (pairs.size() == 0) return out;
    out.pairs.resize(static_cast<std::size_t>(offsets.back() + decisions.back()));
    parallel_for(pairs.size(), kPairGrain, [&](std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) {
            if (decisions[t] > 1) throw StructuralError("compactify: decisions must be 0 or 1");
            if (decisions[t]) out.pairs[static_cast<std::size_t>(offsets[t])] = pairs.pairs[t];
        }
    });
    return out;
}

TraversalResult ray_trace_octree(const RayBundle& rays, const SparseVoxelOctree& svo, int level) {
    if (level < 0 || level > svo.max_level()) {
        throw RangeError("ray_trace_octree: level " + std::to_string(level) + " outside [0, " +
                         std::to_string(svo.max_level()) + "]");
    }
    if (rays.origins.size() != rays.directions.size()) throw UsageError("ray_trace_octree: malformed ray bundle");
    TraversalResult result;
    result.level = level;
    const int final_depth = svo.depth_of_level(level);

    RayVoxelPairList current;
    current.depth = 0;
    current.pairs.resize(rays.size());
    for (std::size_t i = 0; i < rays.size(); ++i) current.pairs[i] = {static_cast<std::uint32_t>(i), 0};

    for (int d = 0; d <= final_depth; ++d) {
        const bool last = d == final_depth;
        const auto decisions = decide(rays, current, svo, last);
        const auto offsets = exclusive_sum(decisions);
        if (last) {
            current = compactify(current, decisions, offsets);
            result.depths.push_back(current);
        } else {
            std::vector<std::uint32_t> hit(decisions.size());
            for (std::size_t t = 0; t < hit.size(); ++t) hit[t] = decisions[t] ? 1u : 0u;
            result.depths.push_back(compactify(current, hit, exclusive_sum(hit)));
            current = subdivide(current, decisions, offsets, svo, rays);
        }
    }

    const auto& final_pairs = result.depths.back().pairs;
    result.t_enter.resize(final_pairs.size());
    result.t_exit.resize(final_pairs.size());
    parallel_for(final_pairs.size(), kPairGrain, [&](std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) {
            const auto span = ray_aabb(rays.ray(final_pairs[t].ray), svo.voxel_box(final_depth, final_pairs[t].voxel));
            result.t_enter[t] = span ? span->t_enter : 0.0;
            result.t_exit[t] = span ? span->t_exit : 0.0;
        }
    });
    result.ray_begin.assign(rays.size() + 1, 0);
    for (const auto& p : final_pairs) ++result.ray_begin[p.ray + 1];
    for (std::size_t i = 0; i < rays.size(); ++i) result.ray_begin[i + 1] += result.ray_begin[i];
    return result;
}

void write_traversal_csv(const TraversalResult& result, const RayBundle& rays, const SparseVoxelOctree& svo,
                         std::ostream& out) {
    out << "ray,level,morton,t_enter\n";
    for (const auto& list : result.depths) {
        const auto& depth = svo.depth(list.depth);
        const int level = list.depth - svo.base_depth();
        for (const auto& p : list.pairs) {
            const auto span = ray_aabb(rays.ray(p.ray), svo.voxel_box(list.depth, p.voxel));
            out << p.ray << ',' << level << ',' << depth.morton[p.voxel] << ',' << (span ? span->t_enter : 0.0)
                << '\n';
        }
    }
}

}  // namespace nglod
