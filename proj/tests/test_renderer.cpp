#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nglod/error.hpp"
#include "nglod/renderer.hpp"
#include "support.hpp"

using namespace nglod;

namespace {

constexpr double kDelta = 0.0003;

double angle_deg(const Vec3& a, const Vec3& b) {
    return std::acos(std::clamp(dot(normalize(a), normalize(b)), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_CASE("camera rays") {
    Camera cam;
    cam.width = 3;
    cam.height = 3;
    const Ray centre = cam.primary_ray(1, 1);
    CHECK(length(centre.direction - Vec3{0, 0, 1}) < 1e-12);
    CHECK(cam.primary_ray(1, 0).direction.y > 0.0);
    CHECK(cam.primary_rays().size() == 9);
    cam.fov_deg = 180.0;
    CHECK_THROWS_AS(cam.validate(), ConfigError);
    cam = {};
    cam.up = {0, 0, 1};
    CHECK_THROWS_AS(cam.validate(), ConfigError);
}

TEST_CASE("sphere tracing the trained sphere") {
    const auto& m = test::trained_sphere();
    RayBundle rays;
    rays.push_back({{0, 0, -3}, {0, 0, 1}});
    rays.push_back({{0, 3, -3}, normalize(Vec3{0, 1, 1})});  // misses B
    const auto trav = ray_trace_octree(rays, m.svo, 3);
    RenderConfig cfg;
    TraceStats stats;
    cfg.record_eval_points = true;
    const auto hits = sphere_trace(rays, trav, m.svo, m.field, cfg, 3.0, &stats);
    REQUIRE(hits[0].hit);
    // Root of the predicted field along the centre ray, by bisection.
    double lo = 2.0, hi = 2.75;
    REQUIRE(predict(m.svo, m.field, rays.ray(0).at(lo), 3) > 0.0);
    REQUIRE(predict(m.svo, m.field, rays.ray(0).at(hi), 3) < 0.0);
    for (int k = 0; k < 60; ++k) {
        const double mid = 0.5 * (lo + hi);
        (predict(m.svo, m.field, rays.ray(0).at(mid), 3) > 0.0 ? lo : hi) = mid;
    }
    INFO("hit z " << hits[0].position.z << ", predicted root z " << rays.ray(0).at(lo).z);
    CHECK(std::abs(hits[0].t - lo) < 2 * kDelta);
    CHECK(std::abs(hits[0].position.z + 0.5) < 0.01);
    CHECK_FALSE(hits[1].hit);
    CHECK(hits[1].decoder_evals == 0);
    CHECK(stats.outside_evals == 0);
    CHECK(stats.decoder_evals == hits[0].decoder_evals);
    for (const auto& p : stats.eval_points) CHECK(m.svo.locate(p, 3).has_value());
}

TEST_CASE("normals of the trained sphere") {
    const auto& m = test::trained_sphere();
    Camera cam;
    cam.width = cam.height = 48;
    RenderConfig cfg;
    const auto res = render(cam, m.svo, m.field, cfg);
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < res.frame.hit.size(); ++i) {
        if (res.frame.hit[i]) pts.push_back(res.frame.position[i]);
    }
    REQUIRE(pts.size() > 100);
    const double eps = 1.0 / 32.0;
    const auto n1 = normals(m.svo, m.field, pts, 3.0, eps);
    const auto n2 = normals(m.svo, m.field, pts, 3.0, eps / 2);
    std::size_t close = 0, stable = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        REQUIRE(n1[i].valid);
        close += angle_deg(n1[i].normal, pts[i]) < 2.0;
        stable += angle_deg(n1[i].normal, n2[i].normal) < 0.5;
    }
    INFO("within 2 deg " << close << " / " << pts.size() << ", stable " << stable);
    CHECK(close >= pts.size() * 95 / 100);
    MESSAGE("eps halving within 0.5 deg on the trained sphere: " << stable << " / " << pts.size());

    // d = a . x has the same central difference for every step.
    const Vec3 a = normalize(Vec3{0.6, -0.2, 0.8});
    NeuralField linear = m.field;
    std::fill(linear.features.values.begin(), linear.features.values.end(), 0.0f);
    for (auto& d : linear.decoders) {
        std::fill(d.w1.begin(), d.w1.end(), 0.0f);
        std::fill(d.b1.begin(), d.b1.end(), 0.0f);
        std::fill(d.w2.begin(), d.w2.end(), 0.0f);
        d.w1[0] = float(a.x);
        d.w1[1] = float(a.y);
        d.w1[2] = float(a.z);
        d.b1[0] = 4.0f;
        d.w2[0] = 1.0f;
        d.b2 = -4.0f;
    }
    const auto l1 = normals(m.svo, linear, pts, 3.0, eps);
    const auto l2 = normals(m.svo, linear, pts, 3.0, eps / 2);
    const Vec3 af{float(a.x), float(a.y), float(a.z)};
    for (std::size_t i = 0; i < pts.size(); ++i) {
        REQUIRE(l1[i].valid);
        CHECK(angle_deg(l1[i].normal, af) < 1e-3);
        CHECK(angle_deg(l1[i].normal, l2[i].normal) < 0.5);
    }

    // Constant field: zero gradient everywhere.
    NeuralField flat = m.field;
    for (auto& d : flat.decoders) {
        std::fill(d.w1.begin(), d.w1.end(), 0.0f);
        std::fill(d.w2.begin(), d.w2.end(), 0.0f);
    }
    const auto n0 = normals(m.svo, flat, std::span(pts).first(5), 3.0, eps);
    for (const auto& n : n0) CHECK_FALSE(n.valid);
}

TEST_CASE("LOD selection") {
    const auto& m = test::trained_sphere();
    Camera cam;
    const std::vector<double> t{2.0, 4.0, 6.0};
    cam.position = {0, 0, -1.5};
    CHECK(select_lod(cam, m.svo, t) == 3.0);
    cam.position = {0, 0, -7};
    CHECK(select_lod(cam, m.svo, t) == 1.0);
    cam.position = m.svo.occupied_bounds().center() + Vec3{0, 0, -3};
    CHECK(select_lod(cam, m.svo, t) == doctest::Approx(2.5));
    const std::vector<double> bad{2.0, 2.0, 6.0};
    CHECK_THROWS_AS(select_lod(cam, m.svo, bad), ConfigError);
    const std::vector<double> few{2.0};
    CHECK_THROWS_AS(select_lod(cam, m.svo, few), ConfigError);
}

TEST_CASE("silhouette of the trained sphere") {
    const auto& m = test::trained_sphere();
    Camera cam;
    cam.width = cam.height = 64;
    const auto res = render(cam, m.svo, m.field, RenderConfig{});
    CHECK(res.timing.outside_evals == 0);
    // Analytic mask: ray passes within r of the centre.
    std::vector<int> want(64 * 64);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            const Ray r = cam.primary_ray(x, y);
            const double t = -dot(r.origin, r.direction);
            want[y * 64 + x] = length(r.at(t)) < 0.5;
        }
    }
    int mismatched = 0, far = 0;
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            const int i = y * 64 + x;
            if (int(res.frame.hit[i]) == want[i]) continue;
            ++mismatched;
            bool near_edge = false;
            for (int dy = -2; dy <= 2; ++dy) {
                for (int dx = -2; dx <= 2; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx >= 0 && yy >= 0 && xx < 64 && yy < 64 && want[yy * 64 + xx] != want[i]) near_edge = true;
                }
            }
            far += !near_edge;
        }
    }
    INFO("mismatched " << mismatched);
    CHECK(far == 0);

    const auto again = render(cam, m.svo, m.field, RenderConfig{});
    CHECK(shade(again.frame) == shade(res.frame));
    CHECK(normal_image(again.frame) == normal_image(res.frame));

    Camera away = cam;
    away.look_at = {0, 0, -6};
    const auto blank = render(away, m.svo, m.field, RenderConfig{});
    CHECK(blank.frame.hit_count() == 0);
    CHECK(blank.timing.decoder_evals == 0);
}

TEST_CASE("LOD argument checks") {
    const auto& m = test::trained_sphere();
    Camera cam;
    RenderConfig cfg;
    cfg.lod = 3.5;
    CHECK_THROWS_AS(resolve_lod(cam, m.svo, cfg), RangeError);
    cfg.lod = 2.25;
    CHECK(resolve_lod(cam, m.svo, cfg) == 2.25);
    cfg.lod.reset();
    CHECK(resolve_lod(cam, m.svo, cfg) == 3.0);
    cfg.delta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("PPM output") {
    Image img;
    img.width = 2;
    img.height = 1;
    img.rgb = {255, 0, 0, 1, 2, 3};
    std::ostringstream os;
    write_ppm(img, os);
    const std::string expect = std::string("P6\n2 1\n255\n") + std::string("\xff\x00\x00\x01\x02\x03", 6);
    CHECK(os.str() == expect);

    const auto dir = test::scratch_dir("ppm");
    save_ppm(img, dir / "a.ppm");
    CHECK(read_ppm(dir / "a.ppm") == img);
    {
        std::ofstream bad(dir / "b.ppm", std::ios::binary);
        bad << "P6\n2 1\n255\n\x01";
    }
    CHECK_THROWS_AS(read_ppm(dir / "b.ppm"), FormatError);

    std::ostringstream csv;
    write_timing_csv_header(csv);
    CHECK(csv.str() == "resolution,pixels,ms_trace,ms_normals,evals\n");
}
