#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nglod/field.hpp"
#include "nglod/octree.hpp"
#include "nglod/rng.hpp"
#include "nglod/sdf.hpp"
#include "nglod/trainer.hpp"

namespace nglod::test {

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("nglod_test_" + name);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path data_dir() { return NGLOD_TEST_DATA_DIR; }

// Icosahedron refined `levels` times, projected to a sphere.
inline TriangleMesh icosphere(int levels, double radius) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                   {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                   {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (auto& v : m.vertices) v = normalize(v);
    for (int l = 0; l < levels; ++l) {
        std::vector<std::array<std::uint32_t, 3>> next;
        std::vector<std::pair<std::uint64_t, std::uint32_t>> cache;
        auto mid = [&](std::uint32_t a, std::uint32_t b) {
            const std::uint64_t key = (std::uint64_t{std::min(a, b)} << 32) | std::max(a, b);
            for (const auto& [k, v] : cache) {
                if (k == key) return v;
            }
            m.vertices.push_back(normalize((m.vertices[a] + m.vertices[b]) * 0.5));
            const auto idx = static_cast<std::uint32_t>(m.vertices.size() - 1);
            cache.emplace_back(key, idx);
            return idx;
        };
        for (const auto& [a, b, c] : m.triangles) {
            const auto ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
            next.push_back({a, ab, ca});
            next.push_back({b, bc, ab});
            next.push_back({c, ca, bc});
            next.push_back({ab, bc, ca});
        }
        m.triangles = std::move(next);
    }
    for (auto& v : m.vertices) v = v * radius;
    return m;
}

inline TriangleMesh cube_mesh(double half) {
    TriangleMesh m;
    for (int i = 0; i < 8; ++i) {
        m.vertices.push_back({(i & 1) ? half : -half, (i & 2) ? half : -half, (i & 4) ? half : -half});
    }
    // Outward winding, two triangles per face.
    m.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                   {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
    return m;
}

struct TrainedModel {
    AnalyticSdf shape;
    SparseVoxelOctree svo;
    NeuralField field;
};

inline TrainedModel train_shape(const AnalyticSdf& shape, int max_lod, int epochs, std::size_t points,
                                std::uint64_t seed) {
    TrainedModel t{shape, {}, {}};
    t.svo = build_octree(&shape, max_lod, shape.sample_surface(1u << 15, derive_seed(seed, 1)));
    t.field = init_field(t.svo, {}, derive_seed(seed, 2));
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.points_per_epoch = points;
    cfg.seed = seed;
    train(shape, t.svo, t.field, cfg);
    return t;
}

// Continues training at a fixed learning rate.
inline void refine(TrainedModel& t, int epochs, double learning_rate, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.points_per_epoch = 50000;
    cfg.learning_rate = learning_rate;
    cfg.seed = seed;
    train(t.shape, t.svo, t.field, cfg);
}

// Sphere of radius 0.5 trained once per test binary. The second pass at a
// lower rate settles the optimizer noise so renderer checks see a smooth field.
inline const TrainedModel& trained_sphere() {
    static const TrainedModel model = [] {
        auto t = train_shape(AnalyticSdf::sphere(0.5), 3, 20, 50000, 11);
        refine(t, 10, 1e-4, 12);
        return t;
    }();
    return model;
}

}  // namespace nglod::test
