#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nglod/field.hpp"
#include "nglod/octree.hpp"
#include "nglod/sampling.hpp"
#include "nglod/sdf.hpp"

namespace nglod {

enum class Schedule { joint, progressive, frozen_decoder };

std::string_view to_string(Schedule schedule);
Schedule parse_schedule(std::string_view name);

struct TrainConfig {
    int epochs = 100;
    std::size_t points_per_epoch = 500000;
    std::size_t batch_size = 512;
    double learning_rate = 1e-3;
    Schedule schedule = Schedule::joint;
    int progressive_interval = 100;  // epochs between newly activated LODs
    std::uint64_t seed = 0;

    /// Throws ConfigError for non-positive sizes or rates.
    void validate() const;
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// One bias-corrected Adam update in place. Throws NumericError naming `path`
/// when a gradient entry is not finite; parameters are untouched in that case.
void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state, double learning_rate,
               std::string_view path = "params");

/// Adam state for every tensor of a NeuralField.
struct FieldOptimizer {
    AdamState features;
    struct Decoder {
        AdamState w1, b1, w2, b2;
    };
    std::vector<Decoder> decoders;

    explicit FieldOptimizer(const NeuralField& field);

    /// Steps the feature volume (unless frozen) and the decoders of `lods`.
    void step(NeuralField& field, const FieldGradients& grads, std::span<const int> lods, double learning_rate,
              bool update_features = true, bool update_decoders = true);
};

/// Mean over the batch of sum_{L in lods} (d_L(x) - d)^2. A sample's terms are
/// skipped when no feature level contains it. Gradients of that mean are added
/// into `grads`. `per_lod_loss`, when given, receives each LOD's share of the
/// mean (same order as `lods`). Deterministic for any worker count.
double loss_batch(const SparseVoxelOctree& svo, const NeuralField& field, std::span<const Vec3> points,
                  std::span<const double> distances, std::span<const int> lods, FieldGradients* grads,
                  std::span<double> per_lod_loss = {});

/// Per-LOD mean squared error over a sample set, without gradients.
std::vector<double> evaluate_loss(const SparseVoxelOctree& svo, const NeuralField& field, const SampleSet& samples);

/// LODs trained during `epoch` under the given schedule.
std::vector<int> active_lods(const TrainConfig& config, int max_lod, int epoch);

struct EpochLog {
    int epoch = 0;
    std::vector<double> lod_loss;  // size max_lod; NaN for LODs not trained this epoch
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&, const NeuralField&)>;

/// Optimizes the field against `oracle`, resampling points_per_epoch samples
/// every epoch. Throws NumericError if the loss stops being finite.
TrainResult train(const DistanceOracle& oracle, const SparseVoxelOctree& svo, NeuralField& field,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// CSV with columns epoch,loss_lod1..loss_lodN,seconds.
void write_train_log_csv(const TrainResult& result, int max_lod, std::ostream& out);

/// Copies decoders from a field trained on another shape (same dimensions).
void transfer_decoders(const NeuralField& source, NeuralField& target);

}  // namespace nglod
