#include <doctest.h>

#include <cmath>

#include "nglod/error.hpp"
#include "nglod/rng.hpp"
#include "nglod/sdf.hpp"
#include "support.hpp"

using namespace nglod;

TEST_CASE("analytic primitives") {
    const auto sphere = AnalyticSdf::sphere(0.5);
    CHECK(eval_analytic(sphere, {0, 0, 0}) == doctest::Approx(-0.5));
    CHECK(eval_analytic(sphere, {1, 0, 0}) == doctest::Approx(0.5));
    CHECK(eval_analytic(AnalyticSdf::box({0.3, 0.3, 0.3}), {0.3, 0, 0}) == doctest::Approx(0.0));

    const auto torus = AnalyticSdf::torus(0.5, 0.2);
    CHECK(eval_analytic(torus, {0.5, 0, 0}) == doctest::Approx(-0.2));
    CounterRng rng(3, 0);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 x = rng.unit_box_point();
        const double q = std::hypot(std::hypot(x.x, x.z) - 0.5, x.y);
        CHECK(eval_analytic(torus, x) == doctest::Approx(q - 0.2).epsilon(1e-12));
    }
}

TEST_CASE("box distance outside corner") {
    const auto box = AnalyticSdf::box({0.3, 0.2, 0.1});
    CHECK(eval_analytic(box, {0.6, 0.6, 0.1}) == doctest::Approx(std::hypot(0.3, 0.4)));
    CHECK(eval_analytic(box, {0.0, 0.0, 0.0}) == doctest::Approx(-0.1));
}

TEST_CASE("csg combinators") {
    const auto a = AnalyticSdf::sphere(0.5);
    const auto b = AnalyticSdf::sphere(0.3, {0.5, 0, 0});
    const Vec3 x{0.2, 0.1, -0.3};
    const double fa = eval_analytic(a, x), fb = eval_analytic(b, x);
    CHECK(eval_analytic(AnalyticSdf::csg_union({a, b}), x) == std::min(fa, fb));
    CHECK(eval_analytic(AnalyticSdf::intersection({a, b}), x) == std::max(fa, fb));
    CHECK(eval_analytic(AnalyticSdf::difference(a, b), x) == std::max(fa, -fb));
    CHECK(eval_analytic(AnalyticSdf::smooth_union(0.1, a, b), x) <= std::min(fa, fb) + 1e-12);
}

TEST_CASE("scene parsing") {
    const auto s = parse_scene("; comment\n(difference (box 0.4 0.4 0.4) (sphere 0.5 :center 0 0.1 0))");
    CHECK(s.kind() == SdfKind::difference);
    REQUIRE(s.children().size() == 2);
    CHECK(s.children()[1].center() == Vec3{0, 0.1, 0});
    CHECK(parse_scene(s.to_sexpr()).to_sexpr() == s.to_sexpr());
    CHECK_THROWS_AS(parse_scene("(sphere)"), StructuralError);
    CHECK_THROWS_AS(parse_scene("(difference (sphere 0.5))"), StructuralError);
    CHECK_THROWS_AS(parse_scene("(blob 1)"), StructuralError);
    CHECK_THROWS_AS(parse_scene("(sphere 0.5"), StructuralError);
}

TEST_CASE("mesh unsigned distance") {
    TriangleMesh tri;
    tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    tri.triangles = {{0, 1, 2}};
    auto r = mesh_unsigned_distance(tri, {0.2, 0.2, 1});
    CHECK(r.distance == doctest::Approx(1.0));
    CHECK(length(r.nearest_point - Vec3{0.2, 0.2, 0}) < 1e-12);
    r = mesh_unsigned_distance(tri, {2, 0, 0});
    CHECK(r.distance == doctest::Approx(1.0));
    CHECK(length(r.nearest_point - Vec3{1, 0, 0}) < 1e-12);
}

TEST_CASE("mesh distance against dense surface sampling") {
    const auto mesh = test::icosphere(0, 0.7);
    REQUIRE(mesh.triangles.size() == 20);
    // Barycentric lattice on every triangle; the lattice minimum can only
    // overestimate the exact distance, by at most the lattice spacing.
    const int n = 400;
    std::vector<Vec3> dense;
    for (const auto& [a, b, c] : mesh.triangles) {
        const Vec3 A = mesh.vertices[a], B = mesh.vertices[b], C = mesh.vertices[c];
        for (int i = 0; i <= n; ++i) {
            for (int j = 0; i + j <= n; ++j) {
                const double u = double(i) / n, v = double(j) / n;
                dense.push_back(A + (B - A) * u + (C - A) * v);
            }
        }
    }
    CounterRng rng(5, 0);
    for (int q = 0; q < 25; ++q) {
        const Vec3 x = rng.unit_box_point();
        double ref = 1e300;
        for (const auto& p : dense) ref = std::min(ref, length(p - x));
        const double d = mesh_unsigned_distance(mesh, x).distance;
        CHECK(d <= ref + 1e-12);
        CHECK(ref - d < 1e-3);
    }
}

TEST_CASE("mesh sign") {
    const auto cube = test::cube_mesh(0.5);
    CHECK(mesh_sign(cube, {0, 0, 0}).sign == -1);
    CHECK(mesh_sign(cube, {2, 0, 0}).sign == 1);

    const auto ico = test::icosphere(4, 0.5);
    const auto sphere = AnalyticSdf::sphere(0.5);
    CounterRng rng(9, 0);
    int agree = 0;
    for (int i = 0; i < 1000; ++i) {
        const Vec3 x = rng.unit_box_point();
        const int expected = eval_analytic(sphere, x) < 0.0 ? -1 : 1;
        agree += mesh_sign(ico, x).sign == expected;
    }
    CHECK(agree >= 999);
}

TEST_CASE("mesh sdf is signed distance") {
    const MeshSdf sdf(test::cube_mesh(0.5));
    CHECK(sdf.distance({0, 0, 0}) == doctest::Approx(-0.5));
    CHECK(sdf.distance({0.8, 0, 0}) == doctest::Approx(0.3));
}

TEST_CASE("normalize mesh") {
    TriangleMesh m;
    m.vertices = {{0, 0, 0}, {2, 2, 2}, {0, 2, 0}};
    m.triangles = {{0, 1, 2}};
    auto n = normalize_mesh(m, 0.1);
    CHECK(n.vertices[0].x == doctest::Approx(-0.9));
    CHECK(n.vertices[1].z == doctest::Approx(0.9));

    TriangleMesh unit;
    unit.vertices = {{-1, -1, -1}, {1, 1, 1}, {-1, 1, 0}};
    unit.triangles = {{0, 1, 2}};
    n = normalize_mesh(unit, 0.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(n.vertices[i] == unit.vertices[i]);

    TriangleMesh longx;
    longx.vertices = {{0, 0, 0}, {4, 2, 2}, {0, 2, 0}};
    longx.triangles = {{0, 1, 2}};
    n = normalize_mesh(longx, 0.1);
    const double s = 1.8 / 4.0;
    CHECK(n.vertices[0].x == doctest::Approx(-0.9));
    CHECK(n.vertices[1].x == doctest::Approx(0.9));
    CHECK(n.vertices[0].y == doctest::Approx(-1.0 * s));
    CHECK(n.vertices[1].y == doctest::Approx(1.0 * s));

    CHECK_THROWS_AS(normalize_mesh(TriangleMesh{}, 0.1), StructuralError);
}

TEST_CASE("obj round trip") {
    const auto dir = test::scratch_dir("obj");
    const auto mesh = test::icosphere(1, 0.5);
    save_obj(mesh, dir / "m.obj");
    const auto back = load_obj(dir / "m.obj");
    CHECK(back.triangles == mesh.triangles);
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    CHECK(length(back.vertices[7] - mesh.vertices[7]) < 1e-6);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nf 1 2 3\n"), StructuralError);
    CHECK(parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").triangles.size() == 2);
}

TEST_CASE("test mesh loads as a closed solid") {
    const auto oracle = load_oracle(test::data_dir() / "blob.obj");
    CHECK(oracle->distance({0, 0, 0}) < 0.0);
    CHECK(oracle->distance({0.95, 0.95, 0.95}) > 0.0);
}
