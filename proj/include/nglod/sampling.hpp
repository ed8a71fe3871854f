#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nglod/sdf.hpp"
#include "nglod/vec3.hpp"

namespace nglod {

enum class SampleScheme : std::uint8_t { uniform = 0, surface = 1, near = 2 };

/// Training points with ground-truth distances and the scheme that drew each.
struct SampleSet {
    std::vector<Vec3> points;
    std::vector<double> distances;
    std::vector<SampleScheme> schemes;

    std::size_t size() const { return points.size(); }
};

/// i.i.d. uniform points in [-1,1]^3.
std::vector<Vec3> sample_uniform(std::size_t count, std::uint64_t seed);

/// Area-weighted triangle choice, then a uniform barycentric point on it.
std::vector<Vec3> sample_surface_mesh(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

struct SurfaceTraceOptions {
    double hit_tolerance = 1e-3;
    int max_steps = 256;
    double min_hit_rate = 1e-4;
    /// Candidates drawn before the hit-rate floor is enforced.
    std::size_t min_attempts = 20000;
    /// Newton projection steps applied to each hit (numerical gradient).
    int refine_steps = 4;
};

/// Rays with uniform origins in B and uniform directions, sphere traced against
/// the oracle with |f| as the step so that origins inside the solid still
/// reach the surface. A candidate counts when |f| drops below hit_tolerance
/// before the ray leaves B; hits are then projected onto the level set with a
/// few Newton steps, each kept only if it reduces |f|. Throws StructuralError when the hit rate falls
/// below min_hit_rate.
std::vector<Vec3> sample_surface_sdf(const DistanceOracle& sdf, std::size_t count, std::uint64_t seed,
                                     const SurfaceTraceOptions& options = {});

/// Adds N(0, sigma^2) to each coordinate, then clamps to B.
std::vector<Vec3> perturb_near(std::span<const Vec3> surface_points, double sigma, std::uint64_t seed);

struct SplitCounts {
    std::size_t surface = 0;
    std::size_t near = 0;
    std::size_t uniform = 0;
};

/// 2:2:1 surface/near/uniform. uniform = floor(total/5), near = floor(2*total/5);
/// the rounding remainder goes to surface.
SplitCounts split_counts(std::size_t total);

inline constexpr double kNearSigma = 0.01;

/// One epoch worth of samples with oracle distances. Surface samples come first,
/// then near (perturbed copies of the leading surface samples), then uniform.
SampleSet build_epoch_set(const DistanceOracle& oracle, std::size_t total, std::uint64_t seed);

/// Binary dump: u64 count, then count records of little-endian f32 x,y,z,d.
void save_sample_set(const SampleSet& samples, const std::filesystem::path& path);
SampleSet load_sample_set(const std::filesystem::path& path);

}  // namespace nglod
