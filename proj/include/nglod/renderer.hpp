#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "nglod/field.hpp"
#include "nglod/octree.hpp"
#include "nglod/sdf.hpp"
#include "nglod/traversal.hpp"
#include "nglod/vec3.hpp"

namespace nglod {

struct Camera {
    Vec3 position{0.0, 0.0, -3.0};
    Vec3 look_at{};
    Vec3 up{0.0, 1.0, 0.0};
    double fov_deg = 45.0;
    int width = 128;
    int height = 128;

    /// Throws ConfigError for a degenerate frame, FOV outside (0, 180) or an
    /// empty image.
    void validate() const;
    /// Ray through the center of pixel (px, py); row 0 is the top row.
    Ray primary_ray(int px, int py) const;
    /// All primary rays, row-major.
    RayBundle primary_rays() const;
};

struct RenderConfig {
    double delta = 0.0003;
    int max_iters = 200;
    double far_plane = 5.0;
    /// Continuous LOD in [1, L_max]. Unset: chosen by select_lod() when
    /// lod_thresholds is given, else L_max.
    std::optional<double> lod;
    std::vector<double> lod_thresholds;
    /// Central-difference step for normals; <= 0 selects 1 / r_Lmax.
    double normal_eps = 0.0;
    /// Orient steps by the sign of the first sample, so rays starting inside
    /// the solid still reach the surface. Used for surface sampling.
    bool two_sided = false;
    /// Keep every decoder query position (testing aid).
    bool record_eval_points = false;

    /// Throws ConfigError on non-positive constants.
    void validate() const;
};

/// Offset added past a voxel entry point when skipping empty space.
inline constexpr double kVoxelEntryEpsilon = 1e-5;

struct TraceHit {
    bool hit = false;
    Vec3 position;
    double t = 0.0;
    double distance = 0.0;  // last predicted distance
    int iterations = 0;
    std::uint32_t decoder_evals = 0;
};

struct TraceStats {
    std::uint64_t decoder_evals = 0;
    /// Decoder queries at points with no occupied voxel at the queried level.
    std::uint64_t outside_evals = 0;
    std::vector<Vec3> eval_points;
};

/// Sphere traces every ray through its voxel list in `traversal`, which must
/// come from ray_trace_octree at level ceil(lod).
std::vector<TraceHit> sphere_trace(const RayBundle& rays, const TraversalResult& traversal,
                                   const SparseVoxelOctree& svo, const NeuralField& field,
                                   const RenderConfig& config, double lod, TraceStats* stats = nullptr);

struct NormalEstimate {
    Vec3 normal;
    bool valid = false;
    std::uint32_t decoder_evals = 0;
};

/// Normalized central differences of the field. Probes that leave the occupied
/// voxels fall back to one-sided differences, then to a halved step; a zero
/// gradient is reported as invalid.
std::vector<NormalEstimate> normals(const SparseVoxelOctree& svo, const NeuralField& field,
                                    std::span<const Vec3> points, double lod, double eps);

/// Piecewise-linear LOD from eye-to-object distance: L_max up to thresholds[0],
/// 1 from thresholds[L_max - 1] on. Throws ConfigError unless there are
/// exactly L_max strictly increasing thresholds.
double select_lod(const Camera& camera, const SparseVoxelOctree& svo, std::span<const double> thresholds);

struct FrameBuffer {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> hit;
    std::vector<Vec3> position;
    std::vector<Vec3> normal;
    std::vector<std::uint8_t> normal_valid;
    std::vector<double> depth;
    std::vector<int> iterations;
    std::vector<std::uint32_t> decoder_evals;

    void resize(int w, int h);
    std::size_t index(int px, int py) const { return static_cast<std::size_t>(py) * static_cast<std::size_t>(width) + static_cast<std::size_t>(px); }
    std::size_t hit_count() const;
};

struct RenderTiming {
    int width = 0;
    int height = 0;
    std::size_t pixels = 0;  // visible (hit) pixels
    double ms_trace = 0.0;   // traversal + sphere tracing
    double ms_normals = 0.0;
    std::uint64_t decoder_evals = 0;  // tracing and normals
    std::uint64_t outside_evals = 0;
    double lod = 0.0;
};

struct RenderResult {
    FrameBuffer frame;
    RenderTiming timing;
    std::vector<Vec3> eval_points;
};

/// LOD used by render(): config.lod, else select_lod() with the configured
/// thresholds, else L_max. Throws RangeError outside [1, L_max].
double resolve_lod(const Camera& camera, const SparseVoxelOctree& svo, const RenderConfig& config);

RenderResult render(const Camera& camera, const SparseVoxelOctree& svo, const NeuralField& field,
                    const RenderConfig& config);

/// Reference frame: plain sphere tracing of the oracle from the ray's entry
/// into B with the same camera and stopping rules; normals from central
/// differences of the oracle.
FrameBuffer render_oracle(const Camera& camera, const DistanceOracle& oracle, const RenderConfig& config,
                          double normal_eps = 1e-4);

// ---------------------------------------------------------------------------
// Images

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    bool operator==(const Image&) const = default;
};

/// Lambert shading with a fixed directional light.
Image shade(const FrameBuffer& frame);
Image normal_image(const FrameBuffer& frame);
/// Hit depths mapped to gray, nearest hit white; misses black.
Image depth_image(const FrameBuffer& frame);

/// Binary PPM: "P6\n<w> <h>\n255\n" followed by RGB bytes.
void write_ppm(const Image& image, std::ostream& out);
void save_ppm(const Image& image, const std::filesystem::path& path);
/// Throws FormatError on anything but the layout written by write_ppm.
Image read_ppm(const std::filesystem::path& path);

void write_timing_csv_header(std::ostream& out);
void write_timing_csv_row(const RenderTiming& timing, std::ostream& out);

}  // namespace nglod
