#include <doctest.h>

#include <cstring>

#include "nglod/binary_io.hpp"
#include "nglod/error.hpp"
#include "nglod/model_io.hpp"
#include "support.hpp"

using namespace nglod;

namespace {

Model small_model() {
    const auto torus = AnalyticSdf::torus(0.5, 0.2);
    Model m;
    m.octree = build_octree(&torus, 3, torus.sample_surface(4096, 1));
    m.field = init_field(m.octree, {8, 16}, 2);
    return m;
}

std::uint32_t u32_at(const std::vector<std::uint8_t>& b, std::size_t off) {
    return b[off] | (b[off + 1] << 8) | (b[off + 2] << 16) | (std::uint32_t(b[off + 3]) << 24);
}

}  // namespace

TEST_CASE("model round trip") {
    const auto m = small_model();
    const auto bytes = encode_model(m);
    CHECK(bytes.size() == serialized_size(m));
    CHECK(std::memcmp(bytes.data(), "NGLD", 4) == 0);
    CHECK(u32_at(bytes, 4) == kModelVersion);
    CHECK(u32_at(bytes, 8) == 4);   // r0
    CHECK(u32_at(bytes, 12) == 3);  // max level
    CHECK(u32_at(bytes, 16) == 8);
    CHECK(u32_at(bytes, 20) == 16);
    const auto depths = u32_at(bytes, 24);
    REQUIRE(depths == std::uint32_t(m.octree.depth_count()));
    for (std::uint32_t d = 0; d < depths; ++d) CHECK(u32_at(bytes, 28 + 4 * d) == m.octree.depth(int(d)).size());
    CHECK(u32_at(bytes, 28 + 4 * depths) == m.octree.corner_count());

    const auto back = decode_model(bytes);
    CHECK(back == m);
    CHECK(encode_model(back) == bytes);

    const auto dir = test::scratch_dir("model");
    save_model(m, dir / "m.ngld");
    CHECK(read_file_bytes((dir / "m.ngld").string()) == bytes);
    CHECK(load_model(dir / "m.ngld") == m);
    CHECK(serialized_size(m) >= storage_bytes(m.octree, 8));
}

TEST_CASE("corrupt model files") {
    const auto bytes = encode_model(small_model());
    for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{11}, std::size_t{40}, bytes.size() / 2,
                          bytes.size() - 5, bytes.size() - 1}) {
        CHECK_THROWS_AS(decode_model(std::span(bytes).first(n)), FormatError);
    }
    auto flipped = bytes;
    flipped[bytes.size() / 3] ^= 0x10;
    CHECK_THROWS_AS(decode_model(flipped), FormatError);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_model(magic), FormatError);
    auto version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(decode_model(version), FormatError);
}

TEST_CASE("truncating LODs") {
    const auto m = small_model();
    const auto t = truncate_model(m, 2);
    CHECK(t.octree.max_level() == 2);
    CHECK(t.field.max_lod() == 2);
    CHECK(t.octree.feature_voxel_count() == m.octree.feature_voxel_count() - m.octree.voxel_count(3));
    CHECK(storage_bytes(t.octree, 8) == 9 * t.octree.feature_voxel_count());
    const auto pts = AnalyticSdf::torus(0.5, 0.2).sample_surface(50, 3);
    for (const auto& p : pts) CHECK(predict(t.octree, t.field, p, 2) == predict(m.octree, m.field, p, 2));

    const auto dir = test::scratch_dir("model_trunc");
    save_model(m, dir / "m.ngld");
    CHECK(load_model(dir / "m.ngld", 2) == t);
    CHECK(load_model(dir / "m.ngld", 3) == m);
    CHECK_THROWS_AS(load_model(dir / "m.ngld", 4), RangeError);
    CHECK_THROWS_AS(load_model(dir / "m.ngld", 0), RangeError);
}
