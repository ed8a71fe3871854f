#include "nglod/model_io.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include <zlib.h>

#include "nglod/binary_io.hpp"
#include "nglod/error.hpp"

namespace nglod {

namespace {

constexpr char kMagic[] = "NGLD";

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
        crc = crc32(crc, bytes.data() + done, chunk);
        done += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

template <typename T>
std::vector<T> get_array(ByteReader& r, std::size_t n) {
    r.require(n * sizeof(T));
    std::vector<T> out(n);
    for (auto& v : out) v = r.get<T>();
    return out;
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Model& model) {
    const auto& svo = model.octree;
    const auto& field = model.field;
    ByteWriter w;
    w.put_bytes(std::string_view(kMagic, 4));
    w.put<std::uint32_t>(kModelVersion);
    w.put<std::uint32_t>(svo.initial_resolution());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(svo.max_level()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(field.feature_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(field.hidden_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(svo.depth_count()));
    for (int d = 0; d < svo.depth_count(); ++d) w.put<std::uint32_t>(static_cast<std::uint32_t>(svo.depth(d).size()));
    w.put<std::uint32_t>(svo.corner_count());

    for (int d = 0; d < svo.depth_count(); ++d) {
        const auto& dep = svo.depth(d);
        for (auto m : dep.morton) w.put<std::uint64_t>(m);
        for (auto p : dep.parent) w.put<std::uint32_t>(p);
        if (d >= svo.base_depth()) {
            for (const auto& c : dep.corners) {
                for (auto idx : c) w.put<std::uint32_t>(idx);
            }
        }
    }
    for (float v : field.features.values) w.put(v);
    for (const auto& dec : field.decoders) {
        for (float v : dec.w1) w.put(v);
        for (float v : dec.b1) w.put(v);
        for (float v : dec.w2) w.put(v);
        w.put(dec.b2);
    }
    w.put<std::uint32_t>(crc32_of(w.bytes()));
    return std::move(w.bytes());
}

Model decode_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12) throw FormatError("model file too short");
    const std::uint32_t stored_crc = static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
                                     static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
                                     static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
                                     static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
    ByteReader r(bytes.data(), bytes.size() - 4);
    if (r.get_bytes(4) != std::string_view(kMagic, 4)) throw FormatError("not a model file (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kModelVersion) {
        throw FormatError("unsupported model version " + std::to_string(version) + " (expected " +
                          std::to_string(kModelVersion) + ")");
    }
    if (crc32_of(bytes.first(bytes.size() - 4)) != stored_crc) throw FormatError("model checksum mismatch");

    const auto r0 = r.get<std::uint32_t>();
    const auto max_level = r.get<std::uint32_t>();
    const auto m = r.get<std::uint32_t>();
    const auto h = r.get<std::uint32_t>();
    const auto depth_count = r.get<std::uint32_t>();
    if (depth_count == 0 || depth_count > 21 || max_level == 0 || max_level > 20 || m == 0 || m > 4096 || h == 0 ||
        h > 65536) {
        throw FormatError("model header out of range");
    }
    const auto counts = get_array<std::uint32_t>(r, depth_count);
    const auto corner_count = r.get<std::uint32_t>();

    const int base = r0 > 0 ? std::countr_zero(r0) : 0;
    std::vector<OctreeDepth> depths(depth_count);
    std::vector<std::vector<std::uint32_t>> stored_parents(depth_count);
    for (std::uint32_t d = 0; d < depth_count; ++d) {
        const std::size_t n = counts[d];
        if (n > r.remaining() / 12) throw FormatError("voxel count exceeds file size");
        depths[d].morton = get_array<std::uint64_t>(r, n);
        stored_parents[d] = get_array<std::uint32_t>(r, n);
        if (static_cast<int>(d) >= base) {
            if (n > r.remaining() / 32) throw FormatError("corner table exceeds file size");
            depths[d].corners.resize(n);
            for (auto& c : depths[d].corners) {
                for (auto& idx : c) idx = r.get<std::uint32_t>();
            }
        }
    }

    Model model;
    try {
        model.octree = SparseVoxelOctree::from_depths(r0, static_cast<int>(max_level), std::move(depths));
    } catch (const StructuralError& e) {
        throw FormatError(std::string("invalid octree section: ") + e.what());
    }
    for (std::uint32_t d = 0; d < depth_count; ++d) {
        if (model.octree.depth(static_cast<int>(d)).parent != stored_parents[d]) {
            throw FormatError("octree parent table disagrees with the Morton lists");
        }
    }
    if (model.octree.corner_count() != corner_count) throw FormatError("corner count disagrees with corner tables");

    auto& field = model.field;
    field.feature_dim = static_cast<int>(m);
    field.hidden_dim = static_cast<int>(h);
    field.features.dim = static_cast<int>(m);
    const std::size_t feature_floats = static_cast<std::size_t>(corner_count) * m;
    if (feature_floats > r.remaining() / 4) throw FormatError("feature section exceeds file size");
    field.features.values = get_array<float>(r, feature_floats);
    const int in = 3 + static_cast<int>(m);
    for (std::uint32_t l = 0; l < max_level; ++l) {
        auto dec = DecoderParams::zeros(in, static_cast<int>(h));
        dec.w1 = get_array<float>(r, dec.w1.size());
        dec.b1 = get_array<float>(r, dec.b1.size());
        dec.w2 = get_array<float>(r, dec.w2.size());
        dec.b2 = r.get<float>();
        field.decoders.push_back(std::move(dec));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after decoder section");
    return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
    write_file_bytes(path.string(), encode_model(model));
}

Model load_model(const std::filesystem::path& path, std::optional<int> max_lod) {
    Model model = decode_model(read_file_bytes(path.string()));
    if (max_lod && *max_lod != model.field.max_lod()) return truncate_model(model, *max_lod);
    return model;
}

Model truncate_model(const Model& model, int max_lod) {
    const int full = model.field.max_lod();
    if (max_lod < 1 || max_lod > full) {
        throw RangeError("max LOD " + std::to_string(max_lod) + " outside [1, " + std::to_string(full) + "]");
    }
    const auto& svo = model.octree;
    std::vector<OctreeDepth> depths;
    for (int d = 0; d <= svo.depth_of_level(max_lod); ++d) depths.push_back(svo.depth(d));
    Model out;
    out.octree = SparseVoxelOctree::from_depths(svo.initial_resolution(), max_lod, std::move(depths));
    out.field.feature_dim = model.field.feature_dim;
    out.field.hidden_dim = model.field.hidden_dim;
    out.field.features.dim = model.field.features.dim;
    const std::size_t keep = static_cast<std::size_t>(out.octree.corner_count()) *
                             static_cast<std::size_t>(model.field.feature_dim);
    out.field.features.values.assign(model.field.features.values.begin(),
                                     model.field.features.values.begin() + static_cast<std::ptrdiff_t>(keep));
    out.field.decoders.assign(model.field.decoders.begin(), model.field.decoders.begin() + max_lod);
    return out;
}

std::size_t serialized_size(const Model& model) {
    const auto& svo = model.octree;
    std::size_t n = 4 + 4 + 5 * 4 + 4 * static_cast<std::size_t>(svo.depth_count()) + 4;
    for (int d = 0; d < svo.depth_count(); ++d) {
        n += svo.depth(d).size() * (8 + 4 + (d >= svo.base_depth() ? 32 : 0));
    }
    n += 4 * model.field.features.values.size();
    for (const auto& dec : model.field.decoders) n += 4 * dec.parameter_count();
    return n + 4;
}

}  // namespace nglod
