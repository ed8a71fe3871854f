#include "nglod/octree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "nglod/error.hpp"
#include "nglod/parallel.hpp"

namespace nglod {

namespace {

std::uint64_t spread_bits(std::uint64_t v) {
    v &= 0x1fffffULL;
    v = (v | (v << 32)) & 0x1f00000000ffffULL;
    v = (v | (v << 16)) & 0x1f0000ff0000ffULL;
    v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
    v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
    v = (v | (v << 2)) & 0x1249249249249249ULL;
    return v;
}

std::uint32_t compact_bits(std::uint64_t v) {
    v &= 0x1249249249249249ULL;
    v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
    v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
    v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
    v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
    v = (v ^ (v >> 32)) & 0x1fffffULL;
    return static_cast<std::uint32_t>(v);
}

constexpr std::uint32_t kMortonLimit = 1u << kMortonBits;

}  // namespace

std::uint64_t morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    if (x >= kMortonLimit || y >= kMortonLimit || z >= kMortonLimit) {
        throw RangeError("morton_encode: coordinate exceeds 21 bits");
    }
    return spread_bits(x) | (spread_bits(y) << 1) | (spread_bits(z) << 2);
}

std::array<std::uint32_t, 3> morton_decode(std::uint64_t code) {
    return {compact_bits(code), compact_bits(code >> 1), compact_bits(code >> 2)};
}

std::optional<RayInterval> ray_aabb(const Ray& ray, const Aabb& box) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a];
        const double d = ray.direction[a];
        if (d == 0.0) {
            if (o < box.min[a] || o > box.max[a]) return std::nullopt;
            continue;
        }
        const double inv = 1.0 / d;
        double ta = (box.min[a] - o) * inv;
        double tb = (box.max[a] - o) * inv;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t1 < t0 || t1 < 0.0) return std::nullopt;
    return RayInterval{std::max(t0, 0.0), t1};
}

std::uint32_t OctreeDepth::num_children(std::size_t v) const {
    return child_mask.empty() ? 0u : static_cast<std::uint32_t>(std::popcount(child_mask[v]));
}

std::array<std::uint32_t, 3> cell_of(const Vec3& x, std::uint32_t resolution) {
    std::array<std::uint32_t, 3> ijk{};
    const double r = static_cast<double>(resolution);
    for (int a = 0; a < 3; ++a) {
        const double u = std::floor((x[a] + 1.0) * 0.5 * r);
        ijk[static_cast<std::size_t>(a)] = static_cast<std::uint32_t>(std::clamp(u, 0.0, r - 1.0));
    }
    return ijk;
}

// ---------------------------------------------------------------------------

namespace {

void link_depths(std::vector<OctreeDepth>& depths) {
    for (std::size_t d = 0; d < depths.size(); ++d) {
        auto& cur = depths[d];
        cur.parent.assign(cur.size(), 0);
        cur.child_begin.assign(cur.size(), 0);
        cur.child_mask.assign(cur.size(), 0);
    }
    for (std::size_t d = 1; d < depths.size(); ++d) {
        auto& up = depths[d - 1];
        auto& cur = depths[d];
        std::size_t p = 0;
        for (std::size_t v = 0; v < cur.size(); ++v) {
            const std::uint64_t pcode = cur.morton[v] >> 3;
            while (p < up.size() && up.morton[p] < pcode) ++p;
            if (p == up.size() || up.morton[p] != pcode) {
                throw StructuralError("octree: voxel at depth " + std::to_string(d) + " has no parent");
            }
            cur.parent[v] = static_cast<std::uint32_t>(p);
            if (up.child_mask[p] == 0) up.child_begin[p] = static_cast<std::uint32_t>(v);
            up.child_mask[p] = static_cast<std::uint8_t>(up.child_mask[p] | (1u << (cur.morton[v] & 7u)));
        }
    }
}

}  // namespace

SparseVoxelOctree SparseVoxelOctree::from_depths(std::uint32_t r0, int max_level, std::vector<OctreeDepth> depths) {
    if (r0 == 0 || !std::has_single_bit(r0)) throw StructuralError("octree: r0 must be a power of two");
    if (max_level < 0) throw StructuralError("octree: negative max level");
    SparseVoxelOctree svo;
    svo.r0_ = r0;
    svo.base_depth_ = std::countr_zero(r0);
    svo.max_level_ = max_level;
    const std::size_t expected = static_cast<std::size_t>(svo.base_depth_ + max_level + 1);
    if (depths.size() != expected) {
        throw StructuralError("octree: expected " + std::to_string(expected) + " depths, got " +
                              std::to_string(depths.size()));
    }
    if (svo.base_depth_ + max_level > 20) throw StructuralError("octree: too deep");

    for (std::size_t d = 0; d < depths.size(); ++d) {
        auto& dep = depths[d];
        dep.resolution = 1u << d;
        const std::uint64_t limit = std::uint64_t{1} << (3 * d);
        for (std::size_t v = 0; v < dep.size(); ++v) {
            if (dep.morton[v] >= limit) throw StructuralError("octree: Morton code out of range");
            if (v > 0 && dep.morton[v] <= dep.morton[v - 1]) throw StructuralError("octree: Morton list not strictly sorted");
        }
    }
    if (depths[0].size() != 1 || depths[0].morton[0] != 0) throw StructuralError("octree: missing root");
    if (depths.back().size() == 0) throw StructuralError("octree: no occupied voxels");
    link_depths(depths);

    svo.corner_offsets_.assign(static_cast<std::size_t>(max_level) + 2, 0);
    std::uint32_t next = 0;
    for (std::size_t d = 0; d < depths.size(); ++d) {
        const int level = static_cast<int>(d) - svo.base_depth_;
        auto& dep = depths[d];
        if (level < 0) {
            if (!dep.corners.empty()) throw StructuralError("octree: corners above feature level 0");
            continue;
        }
        if (dep.corners.size() != dep.size()) throw StructuralError("octree: corner table size mismatch");
        svo.corner_offsets_[static_cast<std::size_t>(level)] = next;
        std::uint32_t hi = next;
        for (const auto& c : dep.corners) {
            for (auto idx : c) {
                if (idx < next) throw StructuralError("octree: corner index below level range");
                hi = std::max(hi, idx + 1);
            }
        }
        next = hi;
    }
    svo.corner_offsets_.back() = next;
    svo.corner_count_ = next;
    svo.depths_ = std::move(depths);

    const int fd = svo.finest_depth();
    Aabb bounds{{1.0, 1.0, 1.0}, {-1.0, -1.0, -1.0}};
    for (std::uint32_t v = 0; v < svo.depths_.back().size(); ++v) {
        const Aabb b = svo.voxel_box(fd, v);
        bounds.min = cwise_min(bounds.min, b.min);
        bounds.max = cwise_max(bounds.max, b.max);
    }
    svo.occupied_bounds_ = bounds;
    return svo;
}

std::size_t SparseVoxelOctree::feature_voxel_count() const {
    std::size_t n = 0;
    for (int l = 0; l <= max_level_; ++l) n += voxel_count(l);
    return n;
}

Aabb SparseVoxelOctree::voxel_box(int d, std::uint32_t index) const {
    const auto& dep = depth(d);
    const auto ijk = morton_decode(dep.morton[index]);
    const double edge = 2.0 / static_cast<double>(dep.resolution);
    const Vec3 lo{-1.0 + edge * ijk[0], -1.0 + edge * ijk[1], -1.0 + edge * ijk[2]};
    return {lo, lo + Vec3{edge, edge, edge}};
}

int SparseVoxelOctree::descend(const Vec3& x, int max_depth, std::span<std::uint32_t> chain) const {
    const int fd = finest_depth();
    max_depth = std::min(max_depth, fd);
    const auto ijk = cell_of(x, depths_.back().resolution);
    chain[0] = 0;
    std::uint32_t v = 0;
    for (int d = 0; d < max_depth; ++d) {
        const auto& dep = depths_[static_cast<std::size_t>(d)];
        const int s = fd - d - 1;
        const unsigned oct = ((ijk[0] >> s) & 1u) | (((ijk[1] >> s) & 1u) << 1) | (((ijk[2] >> s) & 1u) << 2);
        const unsigned mask = dep.child_mask[v];
        if (!(mask & (1u << oct))) return d;
        v = dep.child_begin[v] + static_cast<std::uint32_t>(std::popcount(mask & ((1u << oct) - 1u)));
        chain[static_cast<std::size_t>(d + 1)] = v;
    }
    return max_depth;
}

std::optional<std::uint32_t> SparseVoxelOctree::locate(const Vec3& x, int level) const {
    if (!in_unit_box(x)) throw RangeError("locate: point outside the bounding volume");
    if (level < 0 || level > max_level_) throw RangeError("locate: level out of range");
    std::array<std::uint32_t, 32> chain{};
    const int target = depth_of_level(level);
    if (descend(x, target, chain) < target) return std::nullopt;
    return chain[static_cast<std::size_t>(target)];
}

std::optional<std::uint32_t> SparseVoxelOctree::locate_linear(const Vec3& x, int level) const {
    const auto& dep = this->level(level);
    const auto ijk = cell_of(x, dep.resolution);
    for (std::uint32_t v = 0; v < dep.size(); ++v) {
        if (morton_decode(dep.morton[v]) == ijk) return v;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------

SparseVoxelOctree build_octree(const DistanceOracle* oracle, int max_level, std::span<const Vec3> surface_samples,
                               std::uint32_t r0) {
    if (max_level < 1) throw StructuralError("build_octree: max_level must be >= 1");
    if (r0 == 0 || !std::has_single_bit(r0)) throw StructuralError("build_octree: r0 must be a power of two");
    const int base = std::countr_zero(r0);
    const int finest = base + max_level;
    if (finest > 20) throw StructuralError("build_octree: resolution too fine");

    std::vector<std::uint64_t> binned;
    binned.reserve(surface_samples.size());
    const std::uint32_t finest_res = 1u << finest;
    for (const Vec3& p : surface_samples) {
        if (!in_unit_box(p)) throw RangeError("build_octree: surface sample outside the bounding volume");
        const auto c = cell_of(p, finest_res);
        binned.push_back(morton_encode(c[0], c[1], c[2]));
    }
    std::sort(binned.begin(), binned.end());
    binned.erase(std::unique(binned.begin(), binned.end()), binned.end());

    std::vector<OctreeDepth> depths(static_cast<std::size_t>(finest + 1));
    depths[0].morton = {0};
    for (int d = 1; d <= finest; ++d) {
        const auto& up = depths[static_cast<std::size_t>(d - 1)];
        const std::uint32_t res = 1u << d;
        const double edge = 2.0 / res;
        const double half_diag = std::sqrt(3.0) / res;
        const int shift = 3 * (finest - d);

        std::vector<std::uint64_t> candidates;
        candidates.reserve(up.size() * 8);
        for (auto p : up.morton) {
            for (std::uint64_t oct = 0; oct < 8; ++oct) candidates.push_back((p << 3) | oct);
        }
        std::vector<std::uint8_t> keep(candidates.size(), 0);
        parallel_for(candidates.size(), 256, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const std::uint64_t code = candidates[i];
                // Any finest-level sample whose code shares this prefix lies in the voxel.
                const auto it = std::lower_bound(binned.begin(), binned.end(), code << shift);
                if (it != binned.end() && (*it >> shift) == code) {
                    keep[i] = 1;
                    continue;
                }
                if (oracle != nullptr) {
                    const auto ijk = morton_decode(code);
                    const Vec3 center{-1.0 + edge * (ijk[0] + 0.5), -1.0 + edge * (ijk[1] + 0.5),
                                      -1.0 + edge * (ijk[2] + 0.5)};
                    if (std::abs(oracle->distance(center)) <= half_diag) keep[i] = 1;
                }
            }
        });
        auto& cur = depths[static_cast<std::size_t>(d)];
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (keep[i]) cur.morton.push_back(candidates[i]);
        }
    }
    if (depths.back().morton.empty()) throw StructuralError("build_octree: no occupied voxels");

    // Shared corner lattice per feature level.
    std::uint32_t offset = 0;
    for (int level = 0; level <= max_level; ++level) {
        auto& dep = depths[static_cast<std::size_t>(base + level)];
        std::vector<std::uint64_t> keys;
        keys.reserve(dep.morton.size() * 8);
        for (auto code : dep.morton) {
            const auto ijk = morton_decode(code);
            for (std::uint32_t c = 0; c < 8; ++c) {
                keys.push_back(morton_encode(ijk[0] + (c & 1u), ijk[1] + ((c >> 1) & 1u), ijk[2] + ((c >> 2) & 1u)));
            }
        }
        std::vector<std::uint64_t> unique_keys = keys;
        std::sort(unique_keys.begin(), unique_keys.end());
        unique_keys.erase(std::unique(unique_keys.begin(), unique_keys.end()), unique_keys.end());
        dep.corners.resize(dep.morton.size());
        for (std::size_t v = 0; v < dep.morton.size(); ++v) {
            for (std::size_t c = 0; c < 8; ++c) {
                const auto it = std::lower_bound(unique_keys.begin(), unique_keys.end(), keys[v * 8 + c]);
                dep.corners[v][c] = offset + static_cast<std::uint32_t>(it - unique_keys.begin());
            }
        }
        offset += static_cast<std::uint32_t>(unique_keys.size());
    }

    return SparseVoxelOctree::from_depths(r0, max_level, std::move(depths));
}

std::size_t storage_bytes(const SparseVoxelOctree& svo, int feature_dim) {
    return static_cast<std::size_t>(feature_dim + 1) * svo.feature_voxel_count();
}

}  // namespace nglod
