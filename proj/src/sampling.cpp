#include "nglod/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nglod/binary_io.hpp"
#include "nglod/error.hpp"
#include "nglod/octree.hpp"
#include "nglod/parallel.hpp"
#include "nglod/rng.hpp"

namespace nglod {

namespace {

// Sub-stream ids so that the samplers inside one epoch never share draws.
constexpr std::uint64_t kStreamSurface = 1;
constexpr std::uint64_t kStreamNear = 2;
constexpr std::uint64_t kStreamUniform = 3;

Vec3 project_to_surface(const DistanceOracle& sdf, Vec3 x, int steps) {
    constexpr double h = 1e-6;
    double f = sdf.distance(x);
    for (int k = 0; k < steps && f != 0.0; ++k) {
        const Vec3 g{(sdf.distance(x + Vec3{h, 0, 0}) - sdf.distance(x - Vec3{h, 0, 0})) / (2 * h),
                     (sdf.distance(x + Vec3{0, h, 0}) - sdf.distance(x - Vec3{0, h, 0})) / (2 * h),
                     (sdf.distance(x + Vec3{0, 0, h}) - sdf.distance(x - Vec3{0, 0, h})) / (2 * h)};
        const double g2 = dot(g, g);
        if (!(g2 > 1e-12)) break;
        const Vec3 y = clamp_to_unit_box(x - g * (f / g2));
        const double fy = sdf.distance(y);
        if (!(std::abs(fy) < std::abs(f))) break;
        x = y;
        f = fy;
    }
    return x;
}

}  // namespace

std::vector<Vec3> sample_uniform(std::size_t count, std::uint64_t seed) {
    std::vector<Vec3> out(count);
    parallel_for(count, 4096, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            CounterRng rng(seed, i);
            out[i] = rng.unit_box_point();
        }
    });
    return out;
}

std::vector<Vec3> sample_surface_mesh(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
    if (mesh.triangles.empty()) throw StructuralError("sample_surface_mesh: empty mesh");
    std::vector<double> cdf(mesh.triangles.size());
    double total = 0.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        total += mesh.triangle_area(t);
        cdf[t] = total;
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw StructuralError("sample_surface_mesh: zero total area");

    std::vector<Vec3> out(count);
    parallel_for(count, 4096, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            CounterRng rng(seed, i);
            const double pick = rng.uniform() * total;
            auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
            if (it == cdf.end()) --it;
            const auto& tri = mesh.triangles[static_cast<std::size_t>(it - cdf.begin())];
            double u = rng.uniform();
            double v = rng.uniform();
            if (u + v > 1.0) {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            const Vec3& a = mesh.vertices[tri[0]];
            out[i] = a + (mesh.vertices[tri[1]] - a) * u + (mesh.vertices[tri[2]] - a) * v;
        }
    });
    return out;
}

std::vector<Vec3> sample_surface_sdf(const DistanceOracle& sdf, std::size_t count, std::uint64_t seed,
                                     const SurfaceTraceOptions& options) {
    std::vector<Vec3> out;
    if (count == 0) return out;
    out.reserve(count);

    constexpr std::size_t kBlock = 4096;
    std::vector<Vec3> hit_point(kBlock);
    std::vector<std::uint8_t> hit(kBlock);
    std::size_t attempts = 0;
    while (out.size() < count) {
        parallel_for(kBlock, 256, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                CounterRng rng(seed, attempts + i);
                const Ray ray{rng.unit_box_point(), rng.unit_direction()};
                hit[i] = 0;
                const auto span = ray_aabb(ray, kUnitBox);
                if (!span) continue;
                double t = 0.0;
                for (int k = 0; k < options.max_steps && t <= span->t_exit; ++k) {
                    const Vec3 x = ray.at(t);
                    const double f = sdf.distance(x);
                    if (std::abs(f) < options.hit_tolerance) {
                        hit[i] = 1;
                        hit_point[i] = project_to_surface(sdf, clamp_to_unit_box(x), options.refine_steps);
                        break;
                    }
                    t += std::abs(f);
                }
            }
        });
        for (std::size_t i = 0; i < kBlock && out.size() < count; ++i) {
            if (hit[i]) out.push_back(hit_point[i]);
        }
        attempts += kBlock;
        const double rate = static_cast<double>(out.size()) / static_cast<double>(attempts);
        if (out.size() < count && attempts >= options.min_attempts && rate < options.min_hit_rate) {
            throw StructuralError("sample_surface_sdf: hit rate " + std::to_string(rate) + " after " +
                                  std::to_string(attempts) + " rays is below the floor " +
                                  std::to_string(options.min_hit_rate) + "; is the surface inside B?");
        }
    }
    return out;
}

std::vector<Vec3> perturb_near(std::span<const Vec3> surface_points, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("perturb_near: sigma must be finite and >= 0");
    std::vector<Vec3> out(surface_points.size());
    parallel_for(out.size(), 4096, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            CounterRng rng(seed, i);
            const Vec3 noise{rng.gaussian(), rng.gaussian(), rng.gaussian()};
            out[i] = clamp_to_unit_box(surface_points[i] + noise * sigma);
        }
    });
    return out;
}

SplitCounts split_counts(std::size_t total) {
    SplitCounts s;
    s.uniform = total / 5;
    s.near = 2 * total / 5;
    s.surface = total - s.uniform - s.near;
    return s;
}

SampleSet build_epoch_set(const DistanceOracle& oracle, std::size_t total, std::uint64_t seed) {
    const SplitCounts split = split_counts(total);
    const auto surface = oracle.sample_surface(split.surface, derive_seed(seed, kStreamSurface));
    const auto near = perturb_near(std::span(surface).first(std::min(split.near, surface.size())), kNearSigma,
                                   derive_seed(seed, kStreamNear));
    const auto uniform = sample_uniform(split.uniform, derive_seed(seed, kStreamUniform));

    SampleSet set;
    set.points.reserve(total);
    set.points.insert(set.points.end(), surface.begin(), surface.end());
    set.points.insert(set.points.end(), near.begin(), near.end());
    set.points.insert(set.points.end(), uniform.begin(), uniform.end());
    set.schemes.reserve(total);
    set.schemes.insert(set.schemes.end(), surface.size(), SampleScheme::surface);
    set.schemes.insert(set.schemes.end(), near.size(), SampleScheme::near);
    set.schemes.insert(set.schemes.end(), uniform.size(), SampleScheme::uniform);

    set.distances.resize(set.points.size());
    parallel_for(set.points.size(), 64, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) set.distances[i] = oracle.distance(set.points[i]);
    });
    return set;
}

void save_sample_set(const SampleSet& samples, const std::filesystem::path& path) {
    ByteWriter w;
    w.put<std::uint64_t>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        w.put(static_cast<float>(samples.points[i].x));
        w.put(static_cast<float>(samples.points[i].y));
        w.put(static_cast<float>(samples.points[i].z));
        w.put(static_cast<float>(samples.distances[i]));
    }
    write_file_bytes(path.string(), w.bytes());
}

SampleSet load_sample_set(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path.string());
    ByteReader r(bytes.data(), bytes.size());
    const auto n = r.get<std::uint64_t>();
    if (n > r.remaining() / 16) throw FormatError("sample set: count exceeds file size");
    SampleSet s;
    s.points.resize(n);
    s.distances.resize(n);
    s.schemes.assign(n, SampleScheme::uniform);
    for (std::size_t i = 0; i < n; ++i) {
        const float x = r.get<float>();
        const float y = r.get<float>();
        const float z = r.get<float>();
        s.points[i] = {x, y, z};
        s.distances[i] = r.get<float>();
    }
    if (r.remaining() != 0) throw FormatError("sample set: trailing bytes");
    return s;
}

}  // namespace nglod
