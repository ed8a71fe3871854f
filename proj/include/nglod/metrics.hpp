#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "nglod/field.hpp"
#include "nglod/octree.hpp"
#include "nglod/renderer.hpp"
#include "nglod/sampling.hpp"
#include "nglod/sdf.hpp"

namespace nglod {

/// Surface points of the model at `lod`: rays with uniform origins in B and
/// uniform directions, traced two-sided with the renderer's stopping rules.
/// Throws StructuralError when the hit rate drops below the floor.
std::vector<Vec3> sample_predicted_surface(const SparseVoxelOctree& svo, const NeuralField& field, double lod,
                                           std::size_t count, std::uint64_t seed, const RenderConfig& config = {},
                                           const SurfaceTraceOptions& floor = {});

/// Exact Euclidean nearest-neighbour queries over a uniform grid.
class PointGrid {
public:
    explicit PointGrid(std::span<const Vec3> points);
    double nearest_distance(const Vec3& q) const;

private:
    std::vector<Vec3> points_;  // sorted by cell
    std::vector<std::uint32_t> cell_begin_;
    Vec3 origin_;
    double cell_ = 1.0;
    int dims_[3] = {1, 1, 1};
};

/// 1000 * (mean_a d(a, B) + mean_b d(b, A)) / 2. Throws UsageError on an empty set.
double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b);
/// O(|A||B|) version of chamfer_l1.
double chamfer_l1_bruteforce(std::span<const Vec3> a, std::span<const Vec3> b);

/// IoU in percent of the inside sets (negative distance) of the model at `lod`
/// and the oracle over `count` uniform points in B; 100 when both are empty.
double giou(const SparseVoxelOctree& svo, const NeuralField& field, double lod, const DistanceOracle& oracle,
            std::size_t count, std::uint64_t seed);
/// The same measure between two oracles.
double giou(const DistanceOracle& predicted, const DistanceOracle& oracle, std::size_t count, std::uint64_t seed);

/// n points on the unit sphere from the spherical Fibonacci lattice.
std::vector<Vec3> fibonacci_sphere(int n);

/// Cameras on a sphere of `radius` around the origin, looking at it.
std::vector<Camera> fibonacci_cameras(int n, double radius, int resolution, double fov_deg = 45.0);

struct ImageMetrics {
    double iiou = 0.0;       // percent, averaged over views
    double normal_l2 = 0.0;  // mean squared normal difference over mask intersections
    bool normals_defined = false;
    std::size_t normal_pixels = 0;
};

/// Mask IoU and normal error between two framebuffers of equal size.
ImageMetrics compare_frames(std::span<const FrameBuffer> predicted, std::span<const FrameBuffer> reference);

/// Renders model and oracle from n Fibonacci cameras at radius 4.
ImageMetrics image_metrics(const SparseVoxelOctree& svo, const NeuralField& field, double lod,
                           const DistanceOracle& oracle, int n_cameras, int resolution,
                           const RenderConfig& config = {});

struct EvalConfig {
    std::size_t chamfer_points = 1u << 14;
    std::size_t giou_points = 1u << 16;
    int cameras = 8;
    int resolution = 128;
    std::uint64_t seed = 0;
    bool image_metrics = true;
};

struct LodReport {
    int lod = 0;
    double chamfer_l1_x1000 = 0.0;
    double giou = 0.0;
    double iiou = 0.0;
    double normal_l2 = 0.0;
    bool normals_defined = false;
    std::size_t storage_bytes = 0;  // (m + 1) * |V| over feature levels 0..lod
};

struct EvalReport {
    std::vector<LodReport> lods;
    std::size_t storage_bytes = 0;
};

EvalReport evaluate_model(const SparseVoxelOctree& svo, const NeuralField& field, const DistanceOracle& oracle,
                          const EvalConfig& config);

void write_eval_csv(const EvalReport& report, std::ostream& out);
void write_eval_text(const EvalReport& report, std::ostream& out);

struct BenchRow {
    int resolution = 0;
    double lod = 0.0;
    std::size_t pixels = 0;
    double ms_trace = 0.0;    // median over runs
    double ms_normals = 0.0;  // median over runs
    std::uint64_t evals = 0;
    std::uint64_t outside_evals = 0;
};

/// Renders camera (resized square to each resolution) `runs` times per
/// resolution and LOD. Throws ConfigError when runs < 1.
std::vector<BenchRow> bench_frame(const SparseVoxelOctree& svo, const NeuralField& field, const Camera& camera,
                                  std::span<const int> resolutions, std::span<const double> lods, int runs = 5,
                                  const RenderConfig& config = {});

/// Columns resolution,pixels,ms_trace,ms_normals,evals.
void write_bench_csv(std::span<const BenchRow> rows, std::ostream& out);

}  // namespace nglod
