// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "nglod/binary_io.hpp"
#include "nglod/metrics.hpp"
#include "nglod/model_io.hpp"
#include "nglod/renderer.hpp"
#include "nglod/rng.hpp"
#include "nglod/sdf.hpp"
#include "nglod/trainer.hpp"
#include "nglod/traversal.hpp"

using namespace nglod;

namespace {

constexpr double kDelta = 0.0003;
constexpr int kDeskLod = 4;
constexpr std::size_t kDeskPoints = 50000;
constexpr int kDeskEpochs = 30;
constexpr std::size_t kChamferPoints = 1u << 14;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Shape {
    std::string name;
    std::shared_ptr<const DistanceOracle> oracle;
    bool analytic = true;
};

std::vector<Shape> shapes() {
    std::vector<Shape> out;
    out.push_back({"sphere", std::make_shared<AnalyticSdf>(AnalyticSdf::sphere(0.5)), true});
    out.push_back({"torus", std::make_shared<AnalyticSdf>(AnalyticSdf::torus(0.5, 0.2)), true});
    out.push_back({"box-minus-sphere",
                   std::make_shared<AnalyticSdf>(AnalyticSdf::difference(AnalyticSdf::box({0.45, 0.45, 0.45}),
                                                                         AnalyticSdf::sphere(0.55))),
                   true});
    out.push_back({"blob.obj", std::shared_ptr<const DistanceOracle>(
                                   load_oracle(std::filesystem::path(NGLOD_TEST_DATA_DIR) / "blob.obj")),
                   false});
    return out;
}

Model desk_model(const DistanceOracle& oracle, std::uint64_t seed) {
    Model m;
    m.octree = build_octree(&oracle, kDeskLod, oracle.sample_surface(1u << 17, derive_seed(seed, 1)));
    m.field = init_field(m.octree, {}, derive_seed(seed, 2));
    TrainConfig cfg;
    cfg.epochs = kDeskEpochs;
    cfg.points_per_epoch = kDeskPoints;
    cfg.seed = derive_seed(seed, 3);
    train(oracle, m.octree, m.field, cfg);
    return m;
}

// Desk-scale models, trained once and shared between criteria.
std::map<std::string, std::vector<Model>>& model_cache() {
    static std::map<std::string, std::vector<Model>> cache;
    return cache;
}

const std::vector<Model>& desk_models(const Shape& s) {
    auto& slot = model_cache()[s.name];
    if (slot.empty()) {
        for (auto seed : kSeeds) {
            const auto t0 = std::chrono::steady_clock::now();
            slot.push_back(desk_model(*s.oracle, seed));
            std::printf("  trained %s seed %llu in %.0f s\n", s.name.c_str(), static_cast<unsigned long long>(seed),
                        seconds_since(t0));
            std::fflush(stdout);
        }
    }
    return slot;
}

double chamfer_at(const Model& m, int lod, const std::vector<Vec3>& truth, std::uint64_t seed,
                  double* squared = nullptr) {
    const auto pred = sample_predicted_surface(m.octree, m.field, lod, truth.size(), seed);
    if (squared) {
        // Sum over both directions of the mean squared nearest distance, x1000.
        auto one_way = [](const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
            double sum = 0.0;
            for (const auto& p : a) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& q : b) best = std::min(best, dot(p - q, p - q));
                sum += best;
            }
            return sum / double(a.size());
        };
        *squared = 1000.0 * (one_way(pred, truth) + one_way(truth, pred));
    }
    return chamfer_l1(pred, truth);
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    const auto sphere = AnalyticSdf::sphere(0.5);
    const auto svo = build_octree(&sphere, 2, sphere.sample_surface(4096, 1));
    const auto field = init_field(svo, {}, 1);
    const std::size_t want = (3 + 32) * 128 + 128 + 128 + 1;
    bool ok = want == 4737;
    for (const auto& d : field.decoders) ok = ok && d.parameter_count() == want;
    return {ok, "decoder parameters " + std::to_string(field.decoders[0].parameter_count()) + ", expected 4737"};
}

Outcome criterion2() {
    bool ok = true;
    std::string detail;
    for (const auto& s : shapes()) {
        const auto& models = desk_models(s);
        const auto truth = s.oracle->sample_surface(kChamferPoints, 101);
        const double floor = chamfer_l1(s.oracle->sample_surface(kChamferPoints, 202), truth);
        std::vector<double> med, sq;
        for (int lod = 1; lod <= kDeskLod; ++lod) {
            std::vector<double> c;
            for (std::size_t k = 0; k < models.size(); ++k) {
                double s2 = 0.0;
                c.push_back(chamfer_at(models[k], lod, truth, 303 + k, lod == kDeskLod ? &s2 : nullptr));
                if (lod == kDeskLod) sq.push_back(s2);
            }
            std::sort(c.begin(), c.end());
            med.push_back(c[c.size() / 2]);
        }
        std::sort(sq.begin(), sq.end());
        bool mono = true;
        for (std::size_t i = 1; i < med.size(); ++i) mono = mono && med[i] <= 1.05 * med[i - 1];
        const bool absolute = !s.analytic || med.back() <= 0.5;
        ok = ok && mono && absolute;
        std::printf("  %s median Chamfer x1000 by LOD:", s.name.c_str());
        for (double v : med) std::printf(" %.3f", v);
        std::printf(" | truth-vs-truth floor %.3f | monotone %s%s\n", floor, mono ? "yes" : "no",
                    s.analytic ? (absolute ? ", LOD 4 <= 0.5" : ", LOD 4 > 0.5") : "");
        std::printf("  note (not the criterion): LOD 4 median squared-distance Chamfer x1000 %.4f\n", sq[sq.size() / 2]);
        std::fflush(stdout);
        detail += s.name + (mono && absolute ? " ok; " : " fails; ");
    }
    return {ok, detail + "monotone with 5% slack and LOD 4 <= 0.5 on analytic shapes"};
}

Outcome criterion3() {
    const auto sphere = AnalyticSdf::sphere(0.5);
    const auto torus = AnalyticSdf::torus(0.5, 0.2);
    const auto box = AnalyticSdf::box({0.3, 0.6, 0.2}, {0.1, -0.1, 0.2});
    std::vector<SparseVoxelOctree> trees;
    trees.push_back(build_octree(&sphere, 3, sphere.sample_surface(1u << 14, 1)));
    trees.push_back(build_octree(&torus, 4, torus.sample_surface(1u << 15, 2)));
    trees.push_back(build_octree(&box, 3, box.sample_surface(1u << 14, 3)));
    std::size_t mismatches = 0, pairs = 0;
    for (std::size_t k = 0; k < trees.size(); ++k) {
        const auto& svo = trees[k];
        CounterRng rng(40 + k, 0);
        RayBundle rays;
        for (int i = 0; i < 1000; ++i) {
            const Vec3 o = rng.unit_direction() * rng.uniform(1.8, 3.0);
            const Vec3 target = rng.unit_box_point() * 0.8;
            rays.push_back({o, normalize(target - o)});
        }
        const int level = svo.max_level();
        const int d = svo.depth_of_level(level);
        const auto res = ray_trace_octree(rays, svo, level);
        for (std::uint32_t r = 0; r < rays.size(); ++r) {
            std::vector<std::uint32_t> want;
            for (std::uint32_t v = 0; v < svo.depth(d).size(); ++v) {
                if (ray_aabb(rays.ray(r), svo.voxel_box(d, v))) want.push_back(v);
            }
            std::vector<std::uint32_t> got;
            bool ordered = true;
            for (auto i = res.ray_begin[r]; i < res.ray_begin[r + 1]; ++i) {
                got.push_back(res.hits().pairs[i].voxel);
                ordered = ordered && res.hits().pairs[i].ray == r;
                if (i > res.ray_begin[r]) ordered = ordered && res.t_enter[i] >= res.t_enter[i - 1];
            }
            std::sort(got.begin(), got.end());
            pairs += want.size();
            if (got != want || !ordered) ++mismatches;
        }
    }
    return {mismatches == 0, std::to_string(mismatches) + " of 3000 rays differ from brute force (" +
                                 std::to_string(pairs) + " ray-voxel pairs)"};
}

Outcome criterion4() {
    int bad = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CounterRng rng(seed, 4);
        std::vector<std::uint32_t> v(1000000);
        for (auto& x : v) x = static_cast<std::uint32_t>(rng.next_u64());
        bad += exclusive_sum(v) != exclusive_sum_serial(v);
    }
    return {bad == 0, std::to_string(bad) + " of 10 seeds differ from the serial scan"};
}

Outcome criterion5() {
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    std::string where;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto g = test::random_grad_instance(1000 + seed);
        const auto rep = test::check_gradients(g);
        checked += rep.checked;
        skipped += rep.skipped;
        if (rep.max_rel_error > worst) {
            worst = rep.max_rel_error;
            where = rep.worst;
        }
    }
    return {worst < 1e-4 && checked > 0, "max relative error " + fmt("%.2e", worst) + " over " +
                                             std::to_string(checked) + " parameters (" + std::to_string(skipped) +
                                             " skipped at ReLU kinks); worst " + where};
}

double sphere_entry(const Ray& r, double radius) {
    const double b = dot(r.origin, r.direction);
    const double c = dot(r.origin, r.origin) - radius * radius;
    return -b - std::sqrt(b * b - c);
}

Outcome trace_accuracy(const Model& m, const char* label) {
    const AnalyticSdf sphere = AnalyticSdf::sphere(0.5);
    Camera cam;
    cam.width = cam.height = 128;
    const auto res = render(cam, m.octree, m.field, RenderConfig{});
    std::size_t hits = 0, good = 0;
    for (std::size_t i = 0; i < res.frame.hit.size(); ++i) {
        if (!res.frame.hit[i]) continue;
        ++hits;
        good += std::abs(sphere.distance(res.frame.position[i])) < 5 * kDelta;
    }
    // Centre rays: the four pixels around the image centre plus the axis ray.
    RayBundle centre;
    for (int y : {63, 64}) {
        for (int x : {63, 64}) centre.push_back(cam.primary_ray(x, y));
    }
    centre.push_back({cam.position, normalize(cam.look_at - cam.position)});
    const int level = m.field.max_lod();
    const auto hs = sphere_trace(centre, ray_trace_octree(centre, m.octree, level), m.octree, m.field, RenderConfig{},
                                 level);
    double worst = 0.0;
    bool all_hit = true;
    for (std::uint32_t i = 0; i < centre.size(); ++i) {
        all_hit = all_hit && hs[i].hit;
        if (hs[i].hit) worst = std::max(worst, std::abs(hs[i].t - sphere_entry(centre.ray(i), 0.5)));
    }
    const double frac = hits ? double(good) / double(hits) : 0.0;
    const bool ok = hits > 0 && frac >= 0.95 && all_hit && worst < 2 * kDelta;
    return {ok, std::string(label) + ": " + fmt("%.1f", 100 * frac) + "% of " + std::to_string(hits) +
                    " hit pixels within 5 delta (need 95%); centre-ray depth error " + fmt("%.2e", worst) +
                    " (need < 6.0e-04)"};
}

Outcome criterion6() {
    const Shape sphere{"sphere", std::make_shared<AnalyticSdf>(AnalyticSdf::sphere(0.5))};
    const auto& m = desk_models(sphere).front();
    auto out = trace_accuracy(m, "desk sphere, lr 1e-3");
    // Diagnostic only: the same model after 10 more epochs at a lower rate.
    Model settled = m;
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.points_per_epoch = kDeskPoints;
    cfg.learning_rate = 1e-4;
    cfg.seed = 77;
    train(*sphere.oracle, settled.octree, settled.field, cfg);
    std::printf("  note (not the criterion): %s\n", trace_accuracy(settled, "after 10 epochs at lr 1e-4").detail.c_str());
    return out;
}

Outcome criterion7() {
    std::uint64_t frames = 0, outside = 0, evals = 0, unlocated = 0;
    for (const auto& s : shapes()) {
        const auto& m = desk_models(s).front();
        for (const auto& cam : fibonacci_cameras(4, 4.0, 48)) {
            for (double lod : {1.0, 2.5, 3.0, 4.0}) {
                RenderConfig cfg;
                cfg.lod = lod;
                cfg.record_eval_points = true;
                const auto res = render(cam, m.octree, m.field, cfg);
                ++frames;
                outside += res.timing.outside_evals;
                evals += res.eval_points.size();
                const int level = static_cast<int>(std::ceil(lod));
                for (const auto& p : res.eval_points) unlocated += !m.octree.locate(p, level).has_value();
            }
        }
    }
    return {outside == 0 && unlocated == 0 && evals > 0,
            std::to_string(frames) + " frames, " + std::to_string(evals) + " decoder queries, " +
                std::to_string(outside) + " counted outside, " + std::to_string(unlocated) +
                " outside by independent lookup"};
}

Outcome criterion8() {
    const Shape torus{"torus", std::make_shared<AnalyticSdf>(AnalyticSdf::torus(0.5, 0.2))};
    const auto& m = desk_models(torus).front();
    const auto surf = torus.oracle->sample_surface(100, 88);
    CounterRng rng(88, 1);
    std::size_t violations = 0, inexact = 0, steps = 0;
    for (const auto& p0 : surf) {
        const Vec3 p = clamp_to_unit_box(p0 + rng.unit_direction() * rng.uniform(0.0, 0.01));
        std::vector<double> discrete(kDeskLod + 1);
        for (int l = 1; l <= kDeskLod; ++l) discrete[l] = predict(m.octree, m.field, p, l);
        for (int l = 1; l <= kDeskLod; ++l) inexact += blend(m.octree, m.field, p, double(l)) != discrete[l];
        const int n = (kDeskLod - 1) * 100;
        double prev = blend(m.octree, m.field, p, 1.0);
        for (int i = 1; i <= n; ++i) {
            const double lod = 1.0 + i / 100.0;
            const double cur = blend(m.octree, m.field, p, lod);
            const int k = std::min(static_cast<int>(std::floor(1.0 + (i - 1) / 100.0)), kDeskLod - 1);
            const double bound = 0.01 * std::abs(discrete[k + 1] - discrete[k]);
            violations += std::abs(cur - prev) > bound + 1e-12 * (1.0 + std::abs(cur));
            prev = cur;
            ++steps;
        }
    }
    return {violations == 0 && inexact == 0,
            std::to_string(violations) + " of " + std::to_string(steps) + " steps exceed the linear bound, " +
                std::to_string(inexact) + " integer LODs differ from predict"};
}

Outcome criterion9() {
    const auto all = shapes();
    const auto& sphere = all[0];
    const auto& torus = all[1];
    const Model& joint = desk_models(torus).front();
    const Model& source = desk_models(sphere).front();
    Model general;
    general.octree = joint.octree;
    general.field = init_field(general.octree, {}, derive_seed(9, 2));
    transfer_decoders(source.field, general.field);
    TrainConfig cfg;
    cfg.epochs = kDeskEpochs;
    cfg.points_per_epoch = kDeskPoints;
    cfg.schedule = Schedule::frozen_decoder;
    cfg.seed = derive_seed(9, 3);
    train(*torus.oracle, general.octree, general.field, cfg);
    const auto truth = torus.oracle->sample_surface(kChamferPoints, 909);
    bool ok = true;
    std::string detail;
    for (int lod = 3; lod <= kDeskLod; ++lod) {
        const double cj = chamfer_at(joint, lod, truth, 910);
        const double cg = chamfer_at(general, lod, truth, 911);
        ok = ok && cg <= 2.0 * cj;
        detail += "LOD " + std::to_string(lod) + " frozen " + fmt("%.3f", cg) + " vs joint " + fmt("%.3f", cj) + "; ";
    }
    return {ok, detail + "need frozen <= 2x joint"};
}

Outcome criterion10() {
    const Shape sphere{"sphere", std::make_shared<AnalyticSdf>(AnalyticSdf::sphere(0.5))};
    const auto& m = desk_models(sphere).front();
    const std::vector<int> res{64, 128, 256};
    const std::vector<double> lods{double(kDeskLod)};
    const auto rows = bench_frame(m.octree, m.field, Camera{}, res, lods, 3);
    bool ok = rows.size() == 3;
    std::string detail;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0) {
            ok = ok && rows[i].pixels > rows[i - 1].pixels && rows[i].ms_trace > rows[i - 1].ms_trace &&
                 rows[i].evals > rows[i - 1].evals;
        }
        ok = ok && rows[i].outside_evals == 0;
        detail += std::to_string(rows[i].resolution) + "^2: " + std::to_string(rows[i].pixels) + " px " +
                  fmt("%.1f", rows[i].ms_trace) + " ms " + std::to_string(rows[i].evals) + " evals; ";
    }
    return {ok, detail + "need all increasing"};
}

Outcome criterion11() {
    const auto dir = std::filesystem::temp_directory_path() / "nglod_acceptance";
    std::filesystem::create_directories(dir);
    std::size_t models = 0, failures = 0;
    for (const auto& s : shapes()) {
        for (const auto& m : desk_models(s)) {
            const auto bytes = encode_model(m);
            const auto path = dir / "m.ngld";
            save_model(m, path);
            const auto loaded = load_model(path);
            const auto path2 = dir / "m2.ngld";
            save_model(loaded, path2);
            std::size_t voxels = 0;
            for (int l = 0; l <= m.octree.max_level(); ++l) voxels += m.octree.voxel_count(l);
            const bool ok = loaded == m && read_file_bytes(path.string()) == bytes &&
                            read_file_bytes(path2.string()) == bytes &&
                            storage_bytes(m.octree, m.field.feature_dim) ==
                                static_cast<std::size_t>(m.field.feature_dim + 1) * voxels;
            failures += !ok;
            ++models;
        }
    }
    std::filesystem::remove_all(dir);
    return {failures == 0 && models > 0,
            std::to_string(models - failures) + " of " + std::to_string(models) +
                " models round-trip byte-identically with storage = (m+1)|V|"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"parameter count", criterion1},       {"LOD monotonicity", criterion2},
        {"traversal equivalence", criterion3}, {"scan correctness", criterion4},
        {"gradient correctness", criterion5},  {"sphere-trace accuracy", criterion6},
        {"empty-space guarantee", criterion7}, {"blend continuity", criterion8},
        {"frozen-decoder generalization", criterion9}, {"frametime scaling", criterion10},
        {"serialization", criterion11},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(n)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %2d %s: %s: %s (%.0f s)\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first,
                    o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
