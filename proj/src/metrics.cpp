#include "nglod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include "nglod/error.hpp"
#include "nglod/parallel.hpp"
#include "nglod/rng.hpp"
#include "nglod/traversal.hpp"

namespace nglod {

std::vector<Vec3> sample_predicted_surface(const SparseVoxelOctree& svo, const NeuralField& field, double lod,
                                           std::size_t count, std::uint64_t seed, const RenderConfig& config,
                                           const SurfaceTraceOptions& floor) {
    std::vector<Vec3> out;
    if (count == 0) return out;
    RenderConfig cfg = config;
    cfg.two_sided = true;
    cfg.record_eval_points = false;
    const int level = static_cast<int>(std::ceil(lod));

    constexpr std::size_t kBatch = 4096;
    std::size_t attempts = 0;
    out.reserve(count);
    while (out.size() < count) {
        RayBundle rays;
        rays.origins.resize(kBatch);
        rays.directions.resize(kBatch);
        for (std::size_t i = 0; i < kBatch; ++i) {
            CounterRng rng(seed, attempts + i);
            rays.origins[i] = rng.unit_box_point();
            rays.directions[i] = rng.unit_direction();
        }
        const auto traversal = ray_trace_octree(rays, svo, level);
        const auto hits = sphere_trace(rays, traversal, svo, field, cfg, lod);
        for (const auto& h : hits) {
            if (out.size() == count) break;
            if (h.hit) out.push_back(h.position);
        }
        attempts += kBatch;
        const double rate = static_cast<double>(out.size()) / static_cast<double>(attempts);
        if (out.size() < count && attempts >= floor.min_attempts && rate < floor.min_hit_rate) {
            throw StructuralError("sample_predicted_surface: hit rate " + std::to_string(rate) +
                                  " is below the floor " + std::to_string(floor.min_hit_rate));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

PointGrid::PointGrid(std::span<const Vec3> points) {
    if (points.empty()) throw UsageError("PointGrid: empty point set");
    Vec3 lo = points[0];
    Vec3 hi = points[0];
    for (const auto& p : points) {
        lo = cwise_min(lo, p);
        hi = cwise_max(hi, p);
    }
    const Vec3 ext = hi - lo;
    const double longest = std::max({ext.x, ext.y, ext.z, 1e-9});
    // About two points per cell along a surface-like set.
    const double target_cells = std::max(1.0, static_cast<double>(points.size()) / 2.0);
    cell_ = std::max(longest / std::cbrt(target_cells), 1e-9);
    origin_ = lo;
    const double e[3] = {ext.x, ext.y, ext.z};
    for (int a = 0; a < 3; ++a) dims_[a] = std::clamp(static_cast<int>(e[a] / cell_) + 1, 1, 1024);

    auto cell_id = [&](const Vec3& p) {
        const double c[3] = {p.x - origin_.x, p.y - origin_.y, p.z - origin_.z};
        std::size_t id = 0;
        for (int a = 2; a >= 0; --a) {
            const int k = std::clamp(static_cast<int>(c[a] / cell_), 0, dims_[a] - 1);
            id = id * static_cast<std::size_t>(dims_[a]) + static_cast<std::size_t>(k);
        }
        return id;
    };
    const std::size_t cells = static_cast<std::size_t>(dims_[0]) * static_cast<std::size_t>(dims_[1]) *
                              static_cast<std::size_t>(dims_[2]);
    cell_begin_.assign(cells + 1, 0);
    for (const auto& p : points) ++cell_begin_[cell_id(p) + 1];
    for (std::size_t c = 0; c < cells; ++c) cell_begin_[c + 1] += cell_begin_[c];
    points_.resize(points.size());
    std::vector<std::uint32_t> fill(cell_begin_.begin(), cell_begin_.end() - 1);
    for (const auto& p : points) points_[fill[cell_id(p)]++] = p;
}

double PointGrid::nearest_distance(const Vec3& q) const {
    const double c[3] = {q.x - origin_.x, q.y - origin_.y, q.z - origin_.z};
    int k[3];
    for (int a = 0; a < 3; ++a) k[a] = std::clamp(static_cast<int>(std::floor(c[a] / cell_)), 0, dims_[a] - 1);
    double best2 = std::numeric_limits<double>::infinity();
    const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
    for (int ring = 0; ring <= max_ring; ++ring) {
        for (int z = k[2] - ring; z <= k[2] + ring; ++z) {
            if (z < 0 || z >= dims_[2]) continue;
            for (int y = k[1] - ring; y <= k[1] + ring; ++y) {
                if (y < 0 || y >= dims_[1]) continue;
                for (int x = k[0] - ring; x <= k[0] + ring; ++x) {
                    if (x < 0 || x >= dims_[0]) continue;
                    const bool shell = std::abs(x - k[0]) == ring || std::abs(y - k[1]) == ring || std::abs(z - k[2]) == ring;
                    if (!shell) continue;
                    const std::size_t id = (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims_[1]) +
                                            static_cast<std::size_t>(y)) * static_cast<std::size_t>(dims_[0]) +
                                           static_cast<std::size_t>(x);
                    for (std::uint32_t i = cell_begin_[id]; i < cell_begin_[id + 1]; ++i) {
                        const Vec3 d = points_[i] - q;
                        best2 = std::min(best2, dot(d, d));
                    }
                }
            }
        }
        // Every point outside the searched cube is at least this far from q
        // (cells are clamped, so distance to the cube is measured from k).
        double reach = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
            if (k[a] - ring > 0) reach = std::min(reach, c[a] - (k[a] - ring) * cell_);
            if (k[a] + ring < dims_[a] - 1) reach = std::min(reach, (k[a] + ring + 1) * cell_ - c[a]);
        }
        if (reach == std::numeric_limits<double>::infinity()) break;
        if (best2 <= reach * reach && reach >= 0.0) break;
    }
    return std::sqrt(best2);
}

namespace {

double mean_nearest(std::span<const Vec3> from, const PointGrid& to) {
    constexpr std::size_t kBlock = 1024;
    const std::size_t blocks = (from.size() + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks, 0.0);
    for_each_block(from.size(), kBlock, [&](std::size_t block, std::size_t b, std::size_t e) {
        double s = 0.0;
        for (std::size_t i = b; i < e; ++i) s += to.nearest_distance(from[i]);
        partial[block] = s;
    });
    double total = 0.0;
    for (double s : partial) total += s;
    return total / static_cast<double>(from.size());
}

}  // namespace

double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.empty() || b.empty()) throw UsageError("chamfer_l1: empty point set");
    const PointGrid ga(a);
    const PointGrid gb(b);
    return 1000.0 * 0.5 * (mean_nearest(a, gb) + mean_nearest(b, ga));
}

double chamfer_l1_bruteforce(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.empty() || b.empty()) throw UsageError("chamfer_l1: empty point set");
    auto one_way = [](std::span<const Vec3> from, std::span<const Vec3> to) {
        double s = 0.0;
        for (const auto& p : from) {
            double best2 = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                const Vec3 d = q - p;
                best2 = std::min(best2, dot(d, d));
            }
            s += std::sqrt(best2);
        }
        return s / static_cast<double>(from.size());
    };
    return 1000.0 * 0.5 * (one_way(a, b) + one_way(b, a));
}

namespace {

// make_eval() is called once per block and returns a callable x -> distance.
template <typename MakeEval>
double giou_impl(MakeEval&& make_eval, const DistanceOracle& oracle, std::size_t count, std::uint64_t seed) {
    if (count == 0) throw UsageError("giou: count must be positive");
    const auto points = sample_uniform(count, seed);
    constexpr std::size_t kBlock = 1024;
    const std::size_t blocks = (count + kBlock - 1) / kBlock;
    std::vector<std::size_t> inter(blocks, 0), uni(blocks, 0);
    for_each_block(count, kBlock, [&](std::size_t block, std::size_t b, std::size_t e) {
        auto eval = make_eval();
        for (std::size_t i = b; i < e; ++i) {
            const bool pred = eval(points[i]) < 0.0;
            const bool truth = oracle.distance(points[i]) < 0.0;
            inter[block] += (pred && truth) ? 1 : 0;
            uni[block] += (pred || truth) ? 1 : 0;
        }
    });
    std::size_t in = 0, un = 0;
    for (std::size_t k = 0; k < blocks; ++k) {
        in += inter[k];
        un += uni[k];
    }
    return un == 0 ? 100.0 : 100.0 * static_cast<double>(in) / static_cast<double>(un);
}

}  // namespace

double giou(const SparseVoxelOctree& svo, const NeuralField& field, double lod, const DistanceOracle& oracle,
            std::size_t count, std::uint64_t seed) {
    return giou_impl(
        [&] {
            return [ev = FieldEvaluator(svo, field), lod](const Vec3& x) mutable { return ev.blend(x, lod); };
        },
        oracle, count, seed);
}

double giou(const DistanceOracle& predicted, const DistanceOracle& oracle, std::size_t count, std::uint64_t seed) {
    return giou_impl([&] { return [&](const Vec3& x) { return predicted.distance(x); }; }, oracle, count, seed);
}

std::vector<Vec3> fibonacci_sphere(int n) {
    std::vector<Vec3> out;
    if (n < 1) return out;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double y = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
        const double phi = golden * i;
        out.push_back({r * std::cos(phi), y, r * std::sin(phi)});
    }
    return out;
}

std::vector<Camera> fibonacci_cameras(int n, double radius, int resolution, double fov_deg) {
    std::vector<Camera> cams;
    for (const Vec3& d : fibonacci_sphere(n)) {
        Camera c;
        c.position = d * radius;
        c.look_at = {};
        c.up = std::abs(d.y) > 0.99 ? Vec3{0.0, 0.0, 1.0} : Vec3{0.0, 1.0, 0.0};
        c.fov_deg = fov_deg;
        c.width = c.height = resolution;
        cams.push_back(c);
    }
    return cams;
}

ImageMetrics compare_frames(std::span<const FrameBuffer> predicted, std::span<const FrameBuffer> reference) {
    if (predicted.size() != reference.size() || predicted.empty()) {
        throw UsageError("compare_frames: need the same nonzero number of views");
    }
    ImageMetrics m;
    double iou_sum = 0.0;
    double normal_sum = 0.0;
    for (std::size_t v = 0; v < predicted.size(); ++v) {
        const auto& p = predicted[v];
        const auto& r = reference[v];
        if (p.width != r.width || p.height != r.height) throw UsageError("compare_frames: view sizes differ");
        std::size_t in = 0, un = 0;
        for (std::size_t i = 0; i < p.hit.size(); ++i) {
            const bool a = p.hit[i] != 0;
            const bool b = r.hit[i] != 0;
            in += (a && b) ? 1 : 0;
            un += (a || b) ? 1 : 0;
            if (a && b && p.normal_valid[i] && r.normal_valid[i]) {
                const Vec3 d = p.normal[i] - r.normal[i];
                normal_sum += dot(d, d);
                ++m.normal_pixels;
            }
        }
        iou_sum += un == 0 ? 100.0 : 100.0 * static_cast<double>(in) / static_cast<double>(un);
    }
    m.iiou = iou_sum / static_cast<double>(predicted.size());
    m.normals_defined = m.normal_pixels > 0;
    m.normal_l2 = m.normals_defined ? normal_sum / static_cast<double>(m.normal_pixels)
                                    : std::numeric_limits<double>::quiet_NaN();
    return m;
}

ImageMetrics image_metrics(const SparseVoxelOctree& svo, const NeuralField& field, double lod,
                           const DistanceOracle& oracle, int n_cameras, int resolution, const RenderConfig& config) {
    if (n_cameras < 1) throw ConfigError("image_metrics: need at least one camera");
    RenderConfig cfg = config;
    cfg.lod = lod;
    cfg.record_eval_points = false;
    cfg.two_sided = false;
    std::vector<FrameBuffer> pred, ref;
    for (const Camera& cam : fibonacci_cameras(n_cameras, 4.0, resolution)) {
        pred.push_back(render(cam, svo, field, cfg).frame);
        ref.push_back(render_oracle(cam, oracle, cfg));
    }
    return compare_frames(pred, ref);
}

EvalReport evaluate_model(const SparseVoxelOctree& svo, const NeuralField& field, const DistanceOracle& oracle,
                          const EvalConfig& config) {
    EvalReport report;
    report.storage_bytes = storage_bytes(svo, field.feature_dim);
    const auto truth = oracle.sample_surface(config.chamfer_points, derive_seed(config.seed, 1));
    for (int lod = 1; lod <= field.max_lod(); ++lod) {
        LodReport r;
        r.lod = lod;
        const auto pred = sample_predicted_surface(svo, field, lod, config.chamfer_points, derive_seed(config.seed, 2));
        r.chamfer_l1_x1000 = chamfer_l1(pred, truth);
        r.giou = giou(svo, field, lod, oracle, config.giou_points, derive_seed(config.seed, 3));
        if (config.image_metrics) {
            const auto im = image_metrics(svo, field, lod, oracle, config.cameras, config.resolution);
            r.iiou = im.iiou;
            r.normal_l2 = im.normal_l2;
            r.normals_defined = im.normals_defined;
        } else {
            r.iiou = r.normal_l2 = std::numeric_limits<double>::quiet_NaN();
        }
        std::size_t voxels = 0;
        for (int l = 0; l <= lod; ++l) voxels += svo.voxel_count(l);
        r.storage_bytes = static_cast<std::size_t>(field.feature_dim + 1) * voxels;
        report.lods.push_back(r);
    }
    return report;
}

void write_eval_csv(const EvalReport& report, std::ostream& out) {
    out << "lod,chamfer_l1_x1000,giou,iiou,normal_l2,storage_bytes\n";
    for (const auto& r : report.lods) {
        out << r.lod << ',' << r.chamfer_l1_x1000 << ',' << r.giou << ',' << r.iiou << ',' << r.normal_l2 << ','
            << r.storage_bytes << '\n';
    }
}

void write_eval_text(const EvalReport& report, std::ostream& out) {
    out << "storage estimate (all LODs): " << report.storage_bytes << " bytes\n";
    out << std::left << std::setw(5) << "LOD" << std::setw(14) << "Chamfer-L1" << std::setw(10) << "gIoU"
        << std::setw(10) << "iIoU" << std::setw(12) << "Normal-L2" << "Storage\n";
    for (const auto& r : report.lods) {
        out << std::left << std::setw(5) << r.lod << std::setw(14) << r.chamfer_l1_x1000 << std::setw(10) << r.giou
            << std::setw(10) << r.iiou << std::setw(12);
        if (r.normals_defined) {
            out << r.normal_l2;
        } else {
            out << "undefined";
        }
        out << r.storage_bytes << '\n';
    }
}

std::vector<BenchRow> bench_frame(const SparseVoxelOctree& svo, const NeuralField& field, const Camera& camera,
                                  std::span<const int> resolutions, std::span<const double> lods, int runs,
                                  const RenderConfig& config) {
    if (runs < 1) throw ConfigError("bench_frame: runs must be positive");
    std::vector<BenchRow> rows;
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    for (double lod : lods) {
        for (int res : resolutions) {
            Camera cam = camera;
            cam.width = cam.height = res;
            RenderConfig cfg = config;
            cfg.lod = lod;
            cfg.record_eval_points = false;
            BenchRow row;
            row.resolution = res;
            row.lod = lod;
            std::vector<double> trace, norm;
            for (int k = 0; k < runs; ++k) {
                const auto result = render(cam, svo, field, cfg);
                trace.push_back(result.timing.ms_trace);
                norm.push_back(result.timing.ms_normals);
                row.pixels = result.timing.pixels;
                row.evals = result.timing.decoder_evals;
                row.outside_evals = result.timing.outside_evals;
            }
            row.ms_trace = median(trace);
            row.ms_normals = median(norm);
            rows.push_back(row);
        }
    }
    return rows;
}

void write_bench_csv(std::span<const BenchRow> rows, std::ostream& out) {
    out << "resolution,pixels,ms_trace,ms_normals,evals\n";
    for (const auto& r : rows) {
        out << r.resolution << ',' << r.pixels << ',' << r.ms_trace << ',' << r.ms_normals << ',' << r.evals << '\n';
    }
}

}  // namespace nglod
