#include "nglod/field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nglod/error.hpp"
#include "nglod/rng.hpp"

namespace nglod {

DecoderParams DecoderParams::zeros(int input_dim, int hidden_dim) {
    DecoderParams d;
    d.input_dim = input_dim;
    d.hidden_dim = hidden_dim;
    d.w1.assign(static_cast<std::size_t>(input_dim) * static_cast<std::size_t>(hidden_dim), 0.0f);
    d.b1.assign(static_cast<std::size_t>(hidden_dim), 0.0f);
    d.w2.assign(static_cast<std::size_t>(hidden_dim), 0.0f);
    d.b2 = 0.0f;
    return d;
}

NeuralField init_field(const SparseVoxelOctree& svo, const FieldConfig& config, std::uint64_t seed) {
    if (config.feature_dim < 1 || config.hidden_dim < 1) throw ConfigError("init_field: dimensions must be positive");
    if (svo.max_level() < 1) throw ConfigError("init_field: octree needs at least one LOD");
    NeuralField field;
    field.feature_dim = config.feature_dim;
    field.hidden_dim = config.hidden_dim;
    field.features.dim = config.feature_dim;
    field.features.values.resize(static_cast<std::size_t>(svo.corner_count()) * static_cast<std::size_t>(config.feature_dim));
    {
        CounterRng rng(seed, 0);
        for (auto& v : field.features.values) v = static_cast<float>(kFeatureInitSigma * rng.gaussian());
    }
    const int in = 3 + config.feature_dim;
    for (int lod = 1; lod <= svo.max_level(); ++lod) {
        auto dec = DecoderParams::zeros(in, config.hidden_dim);
        CounterRng rng(seed, static_cast<std::uint64_t>(lod));
        const double bound1 = 1.0 / std::sqrt(static_cast<double>(in));
        const double bound2 = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
        for (auto& w : dec.w1) w = static_cast<float>(rng.uniform(-bound1, bound1));
        for (auto& b : dec.b1) b = static_cast<float>(rng.uniform(-bound1, bound1));
        for (auto& w : dec.w2) w = static_cast<float>(rng.uniform(-bound2, bound2));
        dec.b2 = static_cast<float>(rng.uniform(-bound2, bound2));
        field.decoders.push_back(std::move(dec));
    }
    return field;
}

// ---------------------------------------------------------------------------

TrilinearStencil voxel_stencil(const SparseVoxelOctree& svo, int level, std::uint32_t index, const Vec3& x) {
    const int d = svo.depth_of_level(level);
    const Aabb box = svo.voxel_box(d, index);
    const double edge = svo.voxel_edge(d);
    const double u = std::clamp((x.x - box.min.x) / edge, 0.0, 1.0);
    const double v = std::clamp((x.y - box.min.y) / edge, 0.0, 1.0);
    const double w = std::clamp((x.z - box.min.z) / edge, 0.0, 1.0);
    TrilinearStencil s;
    s.corners = svo.level(level).corners[index];
    for (unsigned c = 0; c < 8; ++c) {
        s.weights[c] = ((c & 1u) ? u : 1.0 - u) * ((c & 2u) ? v : 1.0 - v) * ((c & 4u) ? w : 1.0 - w);
    }
    return s;
}

int collect_stencils(const SparseVoxelOctree& svo, const Vec3& x, int max_level, std::span<TrilinearStencil> stencils) {
    if (!in_unit_box(x)) return 0;
    std::array<std::uint32_t, 32> chain{};
    const int target = svo.depth_of_level(max_level);
    const int reached = svo.descend(x, target, chain);
    const int levels = reached - svo.base_depth() + 1;
    for (int l = 0; l < levels; ++l) {
        stencils[static_cast<std::size_t>(l)] =
            voxel_stencil(svo, l, chain[static_cast<std::size_t>(svo.depth_of_level(l))], x);
    }
    return std::max(levels, 0);
}

namespace {

void accumulate(const FeatureVolume& features, const TrilinearStencil& s, std::span<double> z) {
    const auto m = static_cast<std::size_t>(features.dim);
    for (std::size_t c = 0; c < 8; ++c) {
        const double w = s.weights[c];
        if (w == 0.0) continue;
        const float* f = features.values.data() + static_cast<std::size_t>(s.corners[c]) * m;
        for (std::size_t k = 0; k < m; ++k) z[k] += w * static_cast<double>(f[k]);
    }
}

void check_lod(const NeuralField& field, int lod) {
    if (lod < 1 || lod > field.max_lod()) {
        throw RangeError("LOD " + std::to_string(lod) + " outside [1, " + std::to_string(field.max_lod()) + "]");
    }
}

}  // namespace

std::optional<std::vector<double>> trilinear(const SparseVoxelOctree& svo, const FeatureVolume& features,
                                             const Vec3& x, int level) {
    const auto voxel = svo.locate(x, level);
    if (!voxel) return std::nullopt;
    std::vector<double> z(static_cast<std::size_t>(features.dim), 0.0);
    accumulate(features, voxel_stencil(svo, level, *voxel, x), z);
    return z;
}

FeatureSum sum_features(const SparseVoxelOctree& svo, const FeatureVolume& features, const Vec3& x, int lod) {
    if (lod < 1 || lod > svo.max_level()) throw RangeError("sum_features: LOD out of range");
    std::array<TrilinearStencil, kMaxFeatureLevels> stencils{};
    FeatureSum out;
    out.z.assign(static_cast<std::size_t>(features.dim), 0.0);
    out.levels = collect_stencils(svo, x, lod, stencils);
    for (int l = 0; l < out.levels; ++l) {
        accumulate(features, stencils[static_cast<std::size_t>(l)], out.z);
        out.level_mask |= 1u << l;
    }
    return out;
}

double decode_with_activations(const DecoderParams& dec, const Vec3& x, std::span<const double> z,
                               std::span<double> input, std::span<double> hidden_pre) {
    const auto in = static_cast<std::size_t>(dec.input_dim);
    const auto h = static_cast<std::size_t>(dec.hidden_dim);
    input[0] = x.x;
    input[1] = x.y;
    input[2] = x.z;
    if (z.data() != input.data() + 3) std::copy(z.begin(), z.end(), input.begin() + 3);
    double out = static_cast<double>(dec.b2);
    for (std::size_t j = 0; j < h; ++j) {
        const float* row = dec.w1.data() + j * in;
        double acc = static_cast<double>(dec.b1[j]);
        for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * input[i];
        hidden_pre[j] = acc;
        if (acc > 0.0) out += static_cast<double>(dec.w2[j]) * acc;
    }
    return out;
}

double decode(const DecoderParams& decoder, const Vec3& x, std::span<const double> z) {
    if (z.size() + 3 != static_cast<std::size_t>(decoder.input_dim)) throw ConfigError("decode: feature size mismatch");
    if (!is_finite(x) || !std::all_of(z.begin(), z.end(), [](double v) { return std::isfinite(v); })) {
        throw NumericError("decode: non-finite input");
    }
    std::vector<double> input(static_cast<std::size_t>(decoder.input_dim));
    std::vector<double> hidden(static_cast<std::size_t>(decoder.hidden_dim));
    return decode_with_activations(decoder, x, z, input, hidden);
}

double empty_space_distance(const SparseVoxelOctree& svo, const Vec3& x) {
    const Aabb& b = svo.occupied_bounds();
    const Vec3 outside = cwise_max(cwise_max(b.min - x, x - b.max), Vec3{});
    const double half_diag = std::sqrt(3.0) / static_cast<double>(svo.depth(svo.finest_depth()).resolution);
    return length(outside) + half_diag;
}

double forward(const SparseVoxelOctree& svo, const NeuralField& field, const Vec3& x, int lod, ForwardCache& cache) {
    check_lod(field, lod);
    const auto m = static_cast<std::size_t>(field.feature_dim);
    const auto& dec = field.decoder(lod);
    cache.valid = false;
    cache.x = x;
    cache.lod = lod;
    cache.levels = collect_stencils(svo, x, lod, cache.stencils);
    if (cache.levels == 0) {
        cache.output = empty_space_distance(svo, x);
        cache.valid = true;
        return cache.output;
    }
    cache.input.assign(m + 3, 0.0);
    cache.hidden_pre.resize(static_cast<std::size_t>(dec.hidden_dim));
    std::span<double> z(cache.input.data() + 3, m);
    for (int l = 0; l < cache.levels; ++l) accumulate(field.features, cache.stencils[static_cast<std::size_t>(l)], z);
    cache.output = decode_with_activations(dec, x, std::span<const double>(z.data(), m), cache.input, cache.hidden_pre);
    cache.valid = true;
    return cache.output;
}

double predict(const SparseVoxelOctree& svo, const NeuralField& field, const Vec3& x, int lod) {
    return FieldEvaluator(svo, field).predict(x, lod);
}

double blend(const SparseVoxelOctree& svo, const NeuralField& field, const Vec3& x, double lod) {
    return FieldEvaluator(svo, field).blend(x, lod);
}

FieldEvaluator::FieldEvaluator(const SparseVoxelOctree& svo, const NeuralField& field)
    : svo_(&svo),
      field_(&field),
      input_(static_cast<std::size_t>(field.feature_dim) + 3),
      hidden_(static_cast<std::size_t>(field.hidden_dim)) {}

double FieldEvaluator::evaluate(const Vec3& x, double lod, int levels) {
    // levels counts the contributing feature levels up to ceil(lod).
    const auto m = static_cast<std::size_t>(field_->feature_dim);
    const double base = std::floor(lod);
    const double alpha = lod - base;
    const int lo = static_cast<int>(base);
    const int levels_lo = std::min(levels, lo + 1);
    if (levels_lo == 0) return empty_space_distance(*svo_, x);

    std::span<double> z(input_.data() + 3, m);
    std::fill(z.begin(), z.end(), 0.0);
    for (int l = 0; l < levels_lo; ++l) accumulate(field_->features, stencils_[static_cast<std::size_t>(l)], z);
    const double d_lo = decode_with_activations(field_->decoder(lo), x, z, input_, hidden_);
    ++decoder_evals_;
    if (alpha == 0.0) return d_lo;
    for (int l = levels_lo; l < levels; ++l) accumulate(field_->features, stencils_[static_cast<std::size_t>(l)], z);
    const double d_hi = decode_with_activations(field_->decoder(lo + 1), x, z, input_, hidden_);
    ++decoder_evals_;
    return (1.0 - alpha) * d_lo + alpha * d_hi;
}

double FieldEvaluator::predict(const Vec3& x, int lod) {
    check_lod(*field_, lod);
    const int levels = collect_stencils(*svo_, x, lod, stencils_);
    return evaluate(x, static_cast<double>(lod), levels);
}

double FieldEvaluator::blend(const Vec3& x, double lod) {
    if (!(lod >= 1.0 && lod <= static_cast<double>(field_->max_lod()))) {
        throw RangeError("blend: continuous LOD outside [1, max_lod]");
    }
    const int hi = static_cast<int>(std::ceil(lod));
    const int levels = collect_stencils(*svo_, x, hi, stencils_);
    return evaluate(x, lod, levels);
}

std::optional<double> FieldEvaluator::query_occupied(const Vec3& x, double lod) {
    if (!(lod >= 1.0 && lod <= static_cast<double>(field_->max_lod()))) {
        throw RangeError("query_occupied: continuous LOD outside [1, max_lod]");
    }
    const int hi = static_cast<int>(std::ceil(lod));
    const int levels = collect_stencils(*svo_, x, hi, stencils_);
    if (levels < hi + 1) return std::nullopt;
    return evaluate(x, lod, levels);
}

// ---------------------------------------------------------------------------

void DecoderGradients::reset(const DecoderParams& shape) {
    w1.assign(shape.w1.size(), 0.0);
    b1.assign(shape.b1.size(), 0.0);
    w2.assign(shape.w2.size(), 0.0);
    b2 = 0.0;
}

void DecoderGradients::add(const DecoderGradients& o) {
    for (std::size_t i = 0; i < w1.size(); ++i) w1[i] += o.w1[i];
    for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += o.b1[i];
    for (std::size_t i = 0; i < w2.size(); ++i) w2[i] += o.w2[i];
    b2 += o.b2;
}

FieldGradients FieldGradients::zeros_like(const NeuralField& field) {
    FieldGradients g;
    g.features.assign(field.features.values.size(), 0.0);
    g.decoders.resize(field.decoders.size());
    for (std::size_t i = 0; i < field.decoders.size(); ++i) g.decoders[i].reset(field.decoders[i]);
    return g;
}

void FieldGradients::set_zero() {
    std::fill(features.begin(), features.end(), 0.0);
    for (auto& d : decoders) {
        std::fill(d.w1.begin(), d.w1.end(), 0.0);
        std::fill(d.b1.begin(), d.b1.end(), 0.0);
        std::fill(d.w2.begin(), d.w2.end(), 0.0);
        d.b2 = 0.0;
    }
}

void backward_decoder(const DecoderParams& dec, std::span<const double> input, std::span<const double> hidden_pre,
                      double upstream, DecoderGradients& grads, std::span<double> dz) {
    const auto in = static_cast<std::size_t>(dec.input_dim);
    const auto h = static_cast<std::size_t>(dec.hidden_dim);
    std::fill(dz.begin(), dz.end(), 0.0);
    grads.b2 += upstream;
    if (upstream == 0.0) return;
    for (std::size_t j = 0; j < h; ++j) {
        const double pre = hidden_pre[j];
        if (!(pre > 0.0)) continue;
        grads.w2[j] += upstream * pre;
        const double gh = upstream * static_cast<double>(dec.w2[j]);
        grads.b1[j] += gh;
        double* gw = grads.w1.data() + j * in;
        const float* row = dec.w1.data() + j * in;
        for (std::size_t i = 0; i < in; ++i) gw[i] += gh * input[i];
        for (std::size_t i = 3; i < in; ++i) dz[i - 3] += gh * static_cast<double>(row[i]);
    }
}

void backward(const SparseVoxelOctree& svo, const NeuralField& field, const ForwardCache& cache, double upstream,
              FieldGradients& grads) {
    (void)svo;
    if (!cache.valid) throw UsageError("backward: no forward pass cached");
    if (cache.levels == 0) return;  // empty-space value has no parameters
    const auto m = static_cast<std::size_t>(field.feature_dim);
    std::vector<double> dz(m);
    backward_decoder(field.decoder(cache.lod), cache.input, cache.hidden_pre, upstream, grads.decoders[static_cast<std::size_t>(cache.lod - 1)], dz);
    for (int l = 0; l < cache.levels; ++l) {
        const auto& s = cache.stencils[static_cast<std::size_t>(l)];
        for (std::size_t c = 0; c < 8; ++c) {
            const double w = s.weights[c];
            if (w == 0.0) continue;
            double* g = grads.features.data() + static_cast<std::size_t>(s.corners[c]) * m;
            for (std::size_t k = 0; k < m; ++k) g[k] += w * dz[k];
        }
    }
}

}  // namespace nglod
