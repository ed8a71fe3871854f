#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nglod/octree.hpp"
#include "nglod/vec3.hpp"

namespace nglod {

inline constexpr int kDefaultFeatureDim = 32;
inline constexpr int kDefaultHiddenDim = 128;
inline constexpr double kFeatureInitSigma = 0.01;
inline constexpr int kMaxFeatureLevels = 24;

/// Learnable corner features Z, one m-vector per shared lattice corner.
struct FeatureVolume {
    int dim = kDefaultFeatureDim;
    std::vector<float> values;  // corner-major, dim floats per corner

    std::size_t corner_count() const { return dim > 0 ? values.size() / static_cast<std::size_t>(dim) : 0; }
    std::span<const float> corner(std::uint32_t c) const {
        return {values.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<float> corner(std::uint32_t c) {
        return {values.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }

    bool operator==(const FeatureVolume&) const = default;
};

/// One single-hidden-layer decoder: d = w2 . relu(W1 [x, z] + b1) + b2.
struct DecoderParams {
    int input_dim = 3 + kDefaultFeatureDim;
    int hidden_dim = kDefaultHiddenDim;
    std::vector<float> w1;  // hidden_dim x input_dim, row-major
    std::vector<float> b1;  // hidden_dim
    std::vector<float> w2;  // hidden_dim
    float b2 = 0.0f;

    static DecoderParams zeros(int input_dim, int hidden_dim);
    std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + 1; }

    bool operator==(const DecoderParams&) const = default;
};

/// Corner features plus one decoder per LOD; decoders[L - 1] serves LOD L.
struct NeuralField {
    int feature_dim = kDefaultFeatureDim;
    int hidden_dim = kDefaultHiddenDim;
    FeatureVolume features;
    std::vector<DecoderParams> decoders;

    int max_lod() const { return static_cast<int>(decoders.size()); }
    const DecoderParams& decoder(int lod) const { return decoders.at(static_cast<std::size_t>(lod - 1)); }

    bool operator==(const NeuralField&) const = default;
};

struct FieldConfig {
    int feature_dim = kDefaultFeatureDim;
    int hidden_dim = kDefaultHiddenDim;
};

/// Features ~ N(0, 0.01^2); decoder weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
NeuralField init_field(const SparseVoxelOctree& svo, const FieldConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Trilinear interpolation

/// Corner indices and weights of one voxel for a point inside it.
struct TrilinearStencil {
    std::array<std::uint32_t, 8> corners{};
    std::array<double, 8> weights{};
};

/// Stencil of voxel `index` at feature `level`; local coordinates are clamped
/// to [0,1]^3.
TrilinearStencil voxel_stencil(const SparseVoxelOctree& svo, int level, std::uint32_t index, const Vec3& x);

/// Stencils of the voxels containing x at feature levels 0..max_level, coarse
/// to fine. Returns how many consecutive levels contain x; parent closure makes
/// the contributing levels a prefix. Points outside B contribute nothing.
int collect_stencils(const SparseVoxelOctree& svo, const Vec3& x, int max_level,
                     std::span<TrilinearStencil> stencils);

/// psi(x; level, Z). nullopt when no occupied voxel at `level` contains x.
std::optional<std::vector<double>> trilinear(const SparseVoxelOctree& svo, const FeatureVolume& features,
                                             const Vec3& x, int level);

struct FeatureSum {
    std::vector<double> z;
    /// Bit l set when feature level l contributed.
    std::uint32_t level_mask = 0;
    int levels = 0;

    bool empty() const { return levels == 0; }
};

/// z(x; L, Z): sum of psi over the feature levels 0..L that contain x. An empty
/// result (no contributing level) is left for the caller to handle.
FeatureSum sum_features(const SparseVoxelOctree& svo, const FeatureVolume& features, const Vec3& x, int lod);

// ---------------------------------------------------------------------------
// Decoding

/// d = w2 . relu(W1 [x, z] + b1) + b2. Throws NumericError on non-finite input.
double decode(const DecoderParams& decoder, const Vec3& x, std::span<const double> z);

/// Value reported where no feature level contains x: distance to the occupied
/// region's bounds plus the finest voxel half diagonal.
double empty_space_distance(const SparseVoxelOctree& svo, const Vec3& x);

/// Predicted distance at integer LOD `lod` in [1, max_lod].
double predict(const SparseVoxelOctree& svo, const NeuralField& field, const Vec3& x, int lod);

/// (1 - a) * d_floor + a * d_floor+1 with a = frac(lod). Throws RangeError when
/// lod is outside [1, max_lod]. Integer lod returns predict() exactly.
double blend(const SparseVoxelOctree& svo, const NeuralField& field, const Vec3& x, double lod);

/// Repeated point queries without per-call allocation. Results are
/// bit-identical to predict() and blend().
class FieldEvaluator {
public:
    FieldEvaluator(const SparseVoxelOctree& svo, const NeuralField& field);

    double predict(const Vec3& x, int lod);
    double blend(const Vec3& x, double lod);

    /// blend(x, lod) if x lies in an occupied voxel at feature level
    /// ceil(lod), nullopt otherwise (no decoder runs in that case).
    std::optional<double> query_occupied(const Vec3& x, double lod);

    /// Decoder evaluations performed so far.
    std::uint64_t decoder_evals() const { return decoder_evals_; }

private:
    double evaluate(const Vec3& x, double lod, int levels);

    const SparseVoxelOctree* svo_;
    const NeuralField* field_;
    std::array<TrilinearStencil, kMaxFeatureLevels> stencils_{};
    std::vector<double> input_;
    std::vector<double> hidden_;
    std::uint64_t decoder_evals_ = 0;
};

// ---------------------------------------------------------------------------
// Gradients

struct DecoderGradients {
    std::vector<double> w1, b1, w2;
    double b2 = 0.0;

    void reset(const DecoderParams& shape);
    void add(const DecoderGradients& other);
};

/// Mirrors NeuralField with double-precision accumulators.
struct FieldGradients {
    std::vector<double> features;
    std::vector<DecoderGradients> decoders;

    static FieldGradients zeros_like(const NeuralField& field);
    void set_zero();
};

/// Everything backward() needs from one forward evaluation.
struct ForwardCache {
    bool valid = false;
    Vec3 x;
    int lod = 0;
    int levels = 0;  // contributing feature levels, 0 means empty-space value
    std::array<TrilinearStencil, kMaxFeatureLevels> stencils{};
    std::vector<double> input;       // [x, z]
    std::vector<double> hidden_pre;  // W1 [x, z] + b1
    double output = 0.0;
};

/// predict() that also records the cache for backward().
double forward(const SparseVoxelOctree& svo, const NeuralField& field, const Vec3& x, int lod, ForwardCache& cache);

/// decode() that keeps the activations needed by backward_decoder(). `input`
/// must hold input_dim values and `hidden_pre` hidden_dim values; z may alias
/// input[3..].
double decode_with_activations(const DecoderParams& decoder, const Vec3& x, std::span<const double> z,
                               std::span<double> input, std::span<double> hidden_pre);

/// Decoder-only backward: adds d(upstream * d)/d(theta) into `grads` and
/// writes d(upstream * d)/dz into dz (size input_dim - 3).
void backward_decoder(const DecoderParams& decoder, std::span<const double> input,
                      std::span<const double> hidden_pre, double upstream, DecoderGradients& grads,
                      std::span<double> dz);

/// Full reverse pass into decoder and corner-feature gradients. Throws
/// UsageError if the cache is not valid.
void backward(const SparseVoxelOctree& svo, const NeuralField& field, const ForwardCache& cache, double upstream,
              FieldGradients& grads);

}  // namespace nglod
