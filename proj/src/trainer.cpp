#include "nglod/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "nglod/error.hpp"
#include "nglod/parallel.hpp"
#include "nglod/rng.hpp"

namespace nglod {

std::string_view to_string(Schedule schedule) {
    switch (schedule) {
        case Schedule::joint: return "joint";
        case Schedule::progressive: return "progressive";
        case Schedule::frozen_decoder: return "frozen_decoder";
    }
    return "joint";
}

Schedule parse_schedule(std::string_view name) {
    if (name == "joint") return Schedule::joint;
    if (name == "progressive") return Schedule::progressive;
    if (name == "frozen_decoder" || name == "frozen-decoder") return Schedule::frozen_decoder;
    throw ConfigError("unknown schedule '" + std::string(name) + "' (joint, progressive, frozen_decoder)");
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (points_per_epoch == 0) throw ConfigError("points_per_epoch must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
    if (progressive_interval < 1) throw ConfigError("progressive_interval must be positive");
}

void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state, double learning_rate,
               std::string_view path) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw UsageError("adam_step: size mismatch for " + std::string(path));
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NumericError("non-finite gradient in " + std::string(path) + "[" + std::to_string(i) + "]");
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double eps = state.epsilon;
    parallel_for(params.size(), 1 << 14, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const double g = grads[i];
            state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
            state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
            const double mhat = state.m[i] / c1;
            const double vhat = state.v[i] / c2;
            params[i] = static_cast<float>(static_cast<double>(params[i]) - learning_rate * mhat / (std::sqrt(vhat) + eps));
        }
    });
}

FieldOptimizer::FieldOptimizer(const NeuralField& field) : features(field.features.values.size()) {
    for (const auto& d : field.decoders) decoders.push_back({AdamState(d.w1.size()), AdamState(d.b1.size()),
                                                             AdamState(d.w2.size()), AdamState(1)});
}

void FieldOptimizer::step(NeuralField& field, const FieldGradients& grads, std::span<const int> lods,
                          double learning_rate, bool update_features, bool update_decoders) {
    if (update_features) adam_step(field.features.values, grads.features, features, learning_rate, "features");
    if (!update_decoders) return;
    for (int lod : lods) {
        const auto i = static_cast<std::size_t>(lod - 1);
        auto& dec = field.decoders.at(i);
        const auto& g = grads.decoders.at(i);
        auto& st = decoders.at(i);
        const std::string base = "decoder" + std::to_string(lod);
        adam_step(dec.w1, g.w1, st.w1, learning_rate, base + ".w1");
        adam_step(dec.b1, g.b1, st.b1, learning_rate, base + ".b1");
        adam_step(dec.w2, g.w2, st.w2, learning_rate, base + ".w2");
        const double gb2 = g.b2;
        adam_step(std::span<float>(&dec.b2, 1), std::span<const double>(&gb2, 1), st.b2, learning_rate, base + ".b2");
    }
}

namespace {

constexpr std::size_t kChunk = 64;

// Partial results of one fixed chunk of samples, merged in chunk order.
struct ChunkResult {
    std::vector<double> loss;  // per entry of lods
    std::vector<DecoderGradients> decoders;
    std::vector<TrilinearStencil> stencils;
    std::vector<double> dz;  // feature_dim values per stencil
};

void run_chunk(const SparseVoxelOctree& svo, const NeuralField& field, std::span<const Vec3> points,
               std::span<const double> distances, std::span<const int> lods, double scale, bool want_grads,
               ChunkResult& out) {
    const auto m = static_cast<std::size_t>(field.feature_dim);
    const auto h = static_cast<std::size_t>(field.hidden_dim);
    const int top_lod = *std::max_element(lods.begin(), lods.end());
    out.loss.assign(lods.size(), 0.0);
    if (want_grads) {
        out.decoders.resize(lods.size());
        for (std::size_t k = 0; k < lods.size(); ++k) out.decoders[k].reset(field.decoder(lods[k]));
    }
    out.stencils.clear();
    out.dz.clear();

    std::array<TrilinearStencil, kMaxFeatureLevels> stencils{};
    std::vector<double> prefix(static_cast<std::size_t>(top_lod + 1) * m);
    std::vector<double> dz_level(static_cast<std::size_t>(top_lod + 1) * m);
    std::vector<double> input(m + 3), hidden(h), dz(m);

    for (std::size_t s = 0; s < points.size(); ++s) {
        const Vec3& x = points[s];
        const int levels = collect_stencils(svo, x, top_lod, stencils);
        if (levels == 0) continue;
        std::fill(prefix.begin(), prefix.end(), 0.0);
        for (int l = 0; l < levels; ++l) {
            double* z = prefix.data() + static_cast<std::size_t>(l) * m;
            if (l > 0) std::copy(z - m, z, z);
            const auto& st = stencils[static_cast<std::size_t>(l)];
            for (std::size_t c = 0; c < 8; ++c) {
                const double w = st.weights[c];
                if (w == 0.0) continue;
                const float* f = field.features.values.data() + static_cast<std::size_t>(st.corners[c]) * m;
                for (std::size_t k = 0; k < m; ++k) z[k] += w * static_cast<double>(f[k]);
            }
        }
        if (want_grads) std::fill(dz_level.begin(), dz_level.end(), 0.0);
        int used_levels = 0;
        for (std::size_t k = 0; k < lods.size(); ++k) {
            const int lod = lods[k];
            const int top = std::min(lod, levels - 1);
            used_levels = std::max(used_levels, top + 1);
            const auto& dec = field.decoder(lod);
            const double pred = decode_with_activations(
                dec, x, std::span<const double>(prefix.data() + static_cast<std::size_t>(top) * m, m), input, hidden);
            const double r = pred - distances[s];
            out.loss[k] += r * r;
            if (!want_grads) continue;
            backward_decoder(dec, input, hidden, 2.0 * r * scale, out.decoders[k], dz);
            // Level l's features feed every LOD whose sum includes l.
            for (int l = 0; l <= top; ++l) {
                double* acc = dz_level.data() + static_cast<std::size_t>(l) * m;
                for (std::size_t j = 0; j < m; ++j) acc[j] += dz[j];
            }
        }
        if (!want_grads) continue;
        for (int l = 0; l < used_levels; ++l) {
            out.stencils.push_back(stencils[static_cast<std::size_t>(l)]);
            const double* src = dz_level.data() + static_cast<std::size_t>(l) * m;
            out.dz.insert(out.dz.end(), src, src + m);
        }
    }
}

}  // namespace

double loss_batch(const SparseVoxelOctree& svo, const NeuralField& field, std::span<const Vec3> points,
                  std::span<const double> distances, std::span<const int> lods, FieldGradients* grads,
                  std::span<double> per_lod_loss) {
    if (points.size() != distances.size()) throw UsageError("loss_batch: points and distances differ in size");
    if (!per_lod_loss.empty() && per_lod_loss.size() != lods.size()) {
        throw UsageError("loss_batch: per_lod_loss must match lods");
    }
    for (int lod : lods) {
        if (lod < 1 || lod > field.max_lod()) throw RangeError("loss_batch: LOD out of range");
    }
    std::fill(per_lod_loss.begin(), per_lod_loss.end(), 0.0);
    if (points.empty() || lods.empty()) return 0.0;

    const std::size_t n = points.size();
    const double scale = 1.0 / static_cast<double>(n);
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<ChunkResult> results(chunks);
    for_each_block(n, kChunk, [&](std::size_t block, std::size_t begin, std::size_t end) {
        run_chunk(svo, field, points.subspan(begin, end - begin), distances.subspan(begin, end - begin), lods, scale,
                  grads != nullptr, results[block]);
    });

    const auto m = static_cast<std::size_t>(field.feature_dim);
    std::vector<double> totals(lods.size(), 0.0);
    for (const auto& r : results) {
        for (std::size_t k = 0; k < lods.size(); ++k) totals[k] += r.loss[k];
        if (!grads) continue;
        for (std::size_t k = 0; k < lods.size(); ++k) {
            grads->decoders.at(static_cast<std::size_t>(lods[k] - 1)).add(r.decoders[k]);
        }
        for (std::size_t i = 0; i < r.stencils.size(); ++i) {
            const auto& st = r.stencils[i];
            const double* dz = r.dz.data() + i * m;
            for (std::size_t c = 0; c < 8; ++c) {
                const double w = st.weights[c];
                if (w == 0.0) continue;
                double* g = grads->features.data() + static_cast<std::size_t>(st.corners[c]) * m;
                for (std::size_t j = 0; j < m; ++j) g[j] += w * dz[j];
            }
        }
    }
    double loss = 0.0;
    for (std::size_t k = 0; k < lods.size(); ++k) {
        totals[k] *= scale;
        loss += totals[k];
        if (!per_lod_loss.empty()) per_lod_loss[k] = totals[k];
    }
    return loss;
}

std::vector<double> evaluate_loss(const SparseVoxelOctree& svo, const NeuralField& field, const SampleSet& samples) {
    std::vector<int> lods(static_cast<std::size_t>(field.max_lod()));
    std::iota(lods.begin(), lods.end(), 1);
    std::vector<double> out(lods.size(), 0.0);
    loss_batch(svo, field, samples.points, samples.distances, lods, nullptr, out);
    return out;
}

std::vector<int> active_lods(const TrainConfig& config, int max_lod, int epoch) {
    int lowest = 1;
    if (config.schedule == Schedule::progressive) lowest = std::max(1, max_lod - epoch / config.progressive_interval);
    std::vector<int> lods;
    for (int l = lowest; l <= max_lod; ++l) lods.push_back(l);
    return lods;
}

TrainResult train(const DistanceOracle& oracle, const SparseVoxelOctree& svo, NeuralField& field,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (field.max_lod() != svo.max_level()) throw ConfigError("train: field and octree disagree on LOD count");
    if (field.features.corner_count() != svo.corner_count()) {
        throw ConfigError("train: feature volume does not match the octree corner count");
    }
    const int max_lod = field.max_lod();
    FieldOptimizer optimizer(field);
    FieldGradients grads = FieldGradients::zeros_like(field);
    TrainResult result;

    std::vector<Vec3> points;
    std::vector<double> distances;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto lods = active_lods(config, max_lod, epoch);
        const std::uint64_t epoch_seed = derive_seed(config.seed, static_cast<std::uint64_t>(epoch));
        const SampleSet samples = build_epoch_set(oracle, config.points_per_epoch, epoch_seed);

        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        deterministic_shuffle(std::span(order), derive_seed(epoch_seed, 7));
        points.resize(order.size());
        distances.resize(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            points[i] = samples.points[order[i]];
            distances[i] = samples.distances[order[i]];
        }

        std::vector<double> sums(lods.size(), 0.0), batch_loss(lods.size());
        for (std::size_t begin = 0; begin < points.size(); begin += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, points.size() - begin);
            grads.set_zero();
            const double loss = loss_batch(svo, field, std::span<const Vec3>(points).subspan(begin, count),
                                           std::span<const double>(distances).subspan(begin, count), lods, &grads,
                                           batch_loss);
            if (!std::isfinite(loss)) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": loss is not finite");
            }
            optimizer.step(field, grads, lods, config.learning_rate, true, config.schedule != Schedule::frozen_decoder);
            for (std::size_t k = 0; k < lods.size(); ++k) sums[k] += batch_loss[k] * static_cast<double>(count);
        }

        EpochLog log;
        log.epoch = epoch;
        log.lod_loss.assign(static_cast<std::size_t>(max_lod), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t k = 0; k < lods.size(); ++k) {
            log.lod_loss[static_cast<std::size_t>(lods[k] - 1)] = sums[k] / static_cast<double>(points.size());
        }
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(log);
        if (on_epoch) on_epoch(result.log.back(), field);
    }
    return result;
}

void write_train_log_csv(const TrainResult& result, int max_lod, std::ostream& out) {
    out << "epoch";
    for (int l = 1; l <= max_lod; ++l) out << ",loss_lod" << l;
    out << ",seconds\n";
    for (const auto& e : result.log) {
        out << e.epoch;
        for (int l = 0; l < max_lod; ++l) {
            out << ',';
            const double v = static_cast<std::size_t>(l) < e.lod_loss.size() ? e.lod_loss[static_cast<std::size_t>(l)]
                                                                              : std::numeric_limits<double>::quiet_NaN();
            if (std::isnan(v)) {
                out << "nan";
            } else {
                out << v;
            }
        }
        out << ',' << e.seconds << '\n';
    }
}

void transfer_decoders(const NeuralField& source, NeuralField& target) {
    if (source.feature_dim != target.feature_dim || source.hidden_dim != target.hidden_dim) {
        throw ConfigError("transfer_decoders: decoder dimensions differ");
    }
    if (source.max_lod() < target.max_lod()) throw ConfigError("transfer_decoders: source has fewer LODs");
    for (int l = 1; l <= target.max_lod(); ++l) {
        target.decoders[static_cast<std::size_t>(l - 1)] = source.decoders[static_cast<std::size_t>(l - 1)];
    }
}

}  // namespace nglod
