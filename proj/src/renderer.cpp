#include "nglod/renderer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "nglod/binary_io.hpp"
#include "nglod/error.hpp"
#include "nglod/parallel.hpp"

namespace nglod {

namespace {

constexpr std::size_t kRayBlock = 64;
constexpr int kNormalRetries = 4;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

int level_for(double lod) { return static_cast<int>(std::ceil(lod)); }

}  // namespace

void Camera::validate() const {
    if (width < 1 || height < 1) throw ConfigError("camera: image size must be positive");
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ConfigError("camera: FOV must be in (0, 180) degrees");
    if (!is_finite(position) || !is_finite(look_at) || !is_finite(up)) throw ConfigError("camera: non-finite vector");
    const Vec3 forward = look_at - position;
    if (!(length(forward) > 1e-12)) throw ConfigError("camera: position equals look_at");
    if (!(length(cross(normalize(forward), up)) > 1e-9)) throw ConfigError("camera: up is parallel to the view direction");
}

Ray Camera::primary_ray(int px, int py) const {
    const Vec3 forward = normalize(look_at - position);
    const Vec3 right = normalize(cross(forward, up));
    const Vec3 true_up = cross(right, forward);
    const double tan_half = std::tan(fov_deg * std::numbers::pi / 360.0);
    const double aspect = static_cast<double>(width) / static_cast<double>(height);
    const double u = (2.0 * (px + 0.5) / width - 1.0) * tan_half * aspect;
    const double v = (1.0 - 2.0 * (py + 0.5) / height) * tan_half;
    return {position, normalize(forward + right * u + true_up * v)};
}

RayBundle Camera::primary_rays() const {
    validate();
    RayBundle rays;
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    rays.origins.assign(n, position);
    rays.directions.resize(n);
    parallel_for(n, 1024, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            rays.directions[i] = primary_ray(static_cast<int>(i % static_cast<std::size_t>(width)),
                                             static_cast<int>(i / static_cast<std::size_t>(width))).direction;
        }
    });
    return rays;
}

void RenderConfig::validate() const {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("render: delta must be positive");
    if (max_iters < 1) throw ConfigError("render: max_iters must be positive");
    if (!(far_plane > 0.0) || !std::isfinite(far_plane)) throw ConfigError("render: far_plane must be positive");
    if (lod && !std::isfinite(*lod)) throw ConfigError("render: lod must be finite");
    if (!std::isfinite(normal_eps)) throw ConfigError("render: normal_eps must be finite");
}

// ---------------------------------------------------------------------------

std::vector<TraceHit> sphere_trace(const RayBundle& rays, const TraversalResult& traversal,
                                   const SparseVoxelOctree& svo, const NeuralField& field,
                                   const RenderConfig& config, double lod, TraceStats* stats) {
    config.validate();
    const int level = level_for(lod);
    if (traversal.level != level || traversal.ray_begin.size() != rays.size() + 1) {
        throw UsageError("sphere_trace: traversal does not match the rays or LOD");
    }
    std::vector<TraceHit> hits(rays.size());
    const std::size_t blocks = (rays.size() + kRayBlock - 1) / kRayBlock;
    std::vector<std::uint64_t> block_outside(blocks, 0);
    std::vector<std::vector<Vec3>> block_points(config.record_eval_points ? blocks : 0);
    const double delta = config.delta;
    const double osc = 6.0 * config.delta;

    for_each_block(rays.size(), kRayBlock, [&](std::size_t block, std::size_t begin, std::size_t end) {
        FieldEvaluator eval(svo, field);
        for (std::size_t i = begin; i < end; ++i) {
            TraceHit& h = hits[i];
            const Ray ray = rays.ray(i);
            const std::uint32_t p_begin = traversal.ray_begin[i];
            const std::uint32_t p_end = traversal.ray_begin[i + 1];
            std::uint32_t p = p_begin;
            if (p == p_end) continue;
            double t = traversal.t_enter[p] + kVoxelEntryEpsilon;
            double prev = std::numeric_limits<double>::quiet_NaN();
            bool backed_into_gap = false;
            double side = 0.0;
            const std::uint64_t evals_before = eval.decoder_evals();
            while (h.iterations < config.max_iters) {
                while (p > p_begin && t < traversal.t_enter[p] && t <= traversal.t_exit[p - 1]) --p;
                while (p < p_end && t > traversal.t_exit[p]) ++p;
                if (p == p_end) break;  // voxel list exhausted
                if (t < traversal.t_enter[p]) {
                    backed_into_gap = !std::isnan(prev) && prev < 0.0;
                    t = traversal.t_enter[p] + kVoxelEntryEpsilon;
                    prev = std::numeric_limits<double>::quiet_NaN();
                    if (!backed_into_gap) continue;
                }
                if (t > config.far_plane) break;
                ++h.iterations;
                const Vec3 x = ray.at(t);
                const auto d = eval.query_occupied(x, lod);
                if (!d) {
                    // On a face shared with an empty cell; nudge along the ray.
                    t += kVoxelEntryEpsilon;
                    prev = std::numeric_limits<double>::quiet_NaN();
                    continue;
                }
                if (!svo.locate(x, level)) ++block_outside[block];
                if (config.record_eval_points) block_points[block].push_back(x);
                if (side == 0.0) side = config.two_sided && *d < 0.0 ? -1.0 : 1.0;
                const double dv = side * *d;
                h.distance = *d;
                // A backward step that leaves the occupied run means the
                // crossing sits on the run's entry face. Oscillation: the
                // last two steps bracket the surface within 6 delta.
                const bool oscillating = !std::isnan(prev) && (dv < 0.0) != (prev < 0.0) && std::abs(dv - prev) < osc;
                if (std::abs(dv) < delta || backed_into_gap || oscillating) {
                    h.hit = true;
                    h.t = t;
                    h.position = x;
                    break;
                }
                prev = dv;
                t += dv;
            }
            h.decoder_evals = static_cast<std::uint32_t>(eval.decoder_evals() - evals_before);
        }
    });

    if (stats) {
        for (const auto& h : hits) stats->decoder_evals += h.decoder_evals;
        for (auto c : block_outside) stats->outside_evals += c;
        for (auto& pts : block_points) stats->eval_points.insert(stats->eval_points.end(), pts.begin(), pts.end());
    }
    return hits;
}

std::vector<NormalEstimate> normals(const SparseVoxelOctree& svo, const NeuralField& field,
                                    std::span<const Vec3> points, double lod, double eps) {
    if (!(eps > 0.0)) throw ConfigError("normals: eps must be positive");
    std::vector<NormalEstimate> out(points.size());
    for_each_block(points.size(), kRayBlock, [&](std::size_t, std::size_t begin, std::size_t end) {
        FieldEvaluator eval(svo, field);
        for (std::size_t i = begin; i < end; ++i) {
            const Vec3& x = points[i];
            const std::uint64_t before = eval.decoder_evals();
            std::optional<double> center;
            std::array<double, 3> g{};
            bool ok = true;
            for (int axis = 0; axis < 3 && ok; ++axis) {
                bool done = false;
                double h = eps;
                for (int attempt = 0; attempt <= kNormalRetries && !done; ++attempt, h *= 0.5) {
                    Vec3 step{};
                    (axis == 0 ? step.x : axis == 1 ? step.y : step.z) = h;
                    const auto fp = eval.query_occupied(x + step, lod);
                    const auto fm = eval.query_occupied(x - step, lod);
                    if (fp && fm) {
                        g[static_cast<std::size_t>(axis)] = (*fp - *fm) / (2.0 * h);
                        done = true;
                    } else if (fp || fm) {
                        if (!center) center = eval.query_occupied(x, lod);
                        if (!center) break;
                        g[static_cast<std::size_t>(axis)] = fp ? (*fp - *center) / h : (*center - *fm) / h;
                        done = true;
                    }
                }
                ok = done;
            }
            const Vec3 grad{g[0], g[1], g[2]};
            const double len = length(grad);
            out[i].valid = ok && len > 1e-12 && std::isfinite(len);
            out[i].normal = out[i].valid ? grad / len : Vec3{};
            out[i].decoder_evals = static_cast<std::uint32_t>(eval.decoder_evals() - before);
        }
    });
    return out;
}

double select_lod(const Camera& camera, const SparseVoxelOctree& svo, std::span<const double> thresholds) {
    const int max_lod = svo.max_level();
    if (static_cast<int>(thresholds.size()) != max_lod) {
        throw ConfigError("select_lod: expected " + std::to_string(max_lod) + " thresholds, got " +
                          std::to_string(thresholds.size()));
    }
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!std::isfinite(thresholds[i]) || (i > 0 && !(thresholds[i] > thresholds[i - 1]))) {
            throw ConfigError("select_lod: thresholds must be finite and strictly increasing");
        }
    }
    const double d = length(camera.position - svo.occupied_bounds().center());
    if (d <= thresholds.front()) return static_cast<double>(max_lod);
    if (d >= thresholds.back()) return 1.0;
    std::size_t i = 0;
    while (d >= thresholds[i + 1]) ++i;
    const double frac = (d - thresholds[i]) / (thresholds[i + 1] - thresholds[i]);
    return static_cast<double>(max_lod - static_cast<int>(i)) - frac;
}

void FrameBuffer::resize(int w, int h) {
    width = w;
    height = h;
    const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    hit.assign(n, 0);
    position.assign(n, Vec3{});
    normal.assign(n, Vec3{});
    normal_valid.assign(n, 0);
    depth.assign(n, 0.0);
    iterations.assign(n, 0);
    decoder_evals.assign(n, 0);
}

std::size_t FrameBuffer::hit_count() const {
    return static_cast<std::size_t>(std::count(hit.begin(), hit.end(), std::uint8_t{1}));
}

double resolve_lod(const Camera& camera, const SparseVoxelOctree& svo, const RenderConfig& config) {
    double lod = static_cast<double>(svo.max_level());
    if (config.lod) {
        lod = *config.lod;
    } else if (!config.lod_thresholds.empty()) {
        lod = select_lod(camera, svo, config.lod_thresholds);
    }
    if (!(lod >= 1.0 && lod <= static_cast<double>(svo.max_level()))) {
        throw RangeError("LOD " + std::to_string(lod) + " outside [1, " + std::to_string(svo.max_level()) + "]");
    }
    return lod;
}

RenderResult render(const Camera& camera, const SparseVoxelOctree& svo, const NeuralField& field,
                    const RenderConfig& config) {
    camera.validate();
    config.validate();
    const double lod = resolve_lod(camera, svo, config);
    const double eps = config.normal_eps > 0.0
                           ? config.normal_eps
                           : 1.0 / static_cast<double>(svo.depth(svo.finest_depth()).resolution);
    const RayBundle rays = camera.primary_rays();

    RenderResult result;
    result.frame.resize(camera.width, camera.height);
    TraceStats stats;
    const auto t0 = std::chrono::steady_clock::now();
    const TraversalResult traversal = ray_trace_octree(rays, svo, level_for(lod));
    const auto hits = sphere_trace(rays, traversal, svo, field, config, lod, &stats);
    result.timing.ms_trace = elapsed_ms(t0);

    std::vector<Vec3> hit_points;
    std::vector<std::size_t> hit_pixels;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (!hits[i].hit) continue;
        hit_points.push_back(hits[i].position);
        hit_pixels.push_back(i);
    }
    const auto t1 = std::chrono::steady_clock::now();
    const auto ns = normals(svo, field, hit_points, lod, eps);
    result.timing.ms_normals = elapsed_ms(t1);

    FrameBuffer& fb = result.frame;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        fb.iterations[i] = hits[i].iterations;
        fb.decoder_evals[i] = hits[i].decoder_evals;
    }
    std::uint64_t normal_evals = 0;
    for (std::size_t k = 0; k < hit_pixels.size(); ++k) {
        const std::size_t i = hit_pixels[k];
        fb.hit[i] = 1;
        fb.position[i] = hits[i].position;
        fb.depth[i] = hits[i].t;
        fb.normal[i] = ns[k].normal;
        fb.normal_valid[i] = ns[k].valid ? 1 : 0;
        fb.decoder_evals[i] += ns[k].decoder_evals;
        normal_evals += ns[k].decoder_evals;
    }

    result.timing.width = camera.width;
    result.timing.height = camera.height;
    result.timing.pixels = hit_pixels.size();
    result.timing.decoder_evals = stats.decoder_evals + normal_evals;
    result.timing.outside_evals = stats.outside_evals;
    result.timing.lod = lod;
    result.eval_points = std::move(stats.eval_points);
    return result;
}

FrameBuffer render_oracle(const Camera& camera, const DistanceOracle& oracle, const RenderConfig& config,
                          double normal_eps) {
    camera.validate();
    config.validate();
    if (!(normal_eps > 0.0)) throw ConfigError("render_oracle: normal_eps must be positive");
    FrameBuffer fb;
    fb.resize(camera.width, camera.height);
    const auto n = static_cast<std::size_t>(camera.width) * static_cast<std::size_t>(camera.height);
    const double osc = 6.0 * config.delta;
    parallel_for(n, kRayBlock, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const Ray ray = camera.primary_ray(static_cast<int>(i % static_cast<std::size_t>(camera.width)),
                                               static_cast<int>(i / static_cast<std::size_t>(camera.width)));
            const auto span = ray_aabb(ray, kUnitBox);
            if (!span) continue;
            const double t_max = std::min(span->t_exit, config.far_plane);
            double t = span->t_enter;
            double prev = std::numeric_limits<double>::quiet_NaN();
            int k = 0;
            for (; k < config.max_iters && t <= t_max; ++k) {
                const Vec3 x = ray.at(t);
                const double d = oracle.distance(x);
                // Starting inside the solid counts as a hit at the box face.
                if (std::abs(d) < config.delta || (k == 0 && d < 0.0) ||
                    (!std::isnan(prev) && (d < 0.0) != (prev < 0.0) && std::abs(d - prev) < osc)) {
                    fb.hit[i] = 1;
                    fb.position[i] = x;
                    fb.depth[i] = t;
                    break;
                }
                prev = d;
                t += d;
            }
            fb.iterations[i] = k;
            if (!fb.hit[i]) continue;
            const Vec3& x = fb.position[i];
            const double h = normal_eps;
            const Vec3 g{oracle.distance(x + Vec3{h, 0, 0}) - oracle.distance(x - Vec3{h, 0, 0}),
                         oracle.distance(x + Vec3{0, h, 0}) - oracle.distance(x - Vec3{0, h, 0}),
                         oracle.distance(x + Vec3{0, 0, h}) - oracle.distance(x - Vec3{0, 0, h})};
            const double len = length(g);
            if (len > 0.0 && std::isfinite(len)) {
                fb.normal[i] = g / len;
                fb.normal_valid[i] = 1;
            }
        }
    });
    return fb;
}

// ---------------------------------------------------------------------------

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image blank(const FrameBuffer& frame) {
    Image img;
    img.width = frame.width;
    img.height = frame.height;
    img.rgb.assign(static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height) * 3, 0);
    return img;
}

}  // namespace

Image shade(const FrameBuffer& frame) {
    const Vec3 light = normalize(Vec3{-0.5, 0.8, -0.6});
    const Vec3 albedo{0.85, 0.80, 0.75};
    constexpr double kAmbient = 0.2;
    Image img = blank(frame);
    for (std::size_t i = 0; i < frame.hit.size(); ++i) {
        if (!frame.hit[i]) continue;
        const double lambert = frame.normal_valid[i] ? std::max(0.0, dot(frame.normal[i], light)) : 0.0;
        const double k = kAmbient + (1.0 - kAmbient) * lambert;
        img.rgb[3 * i + 0] = to_byte(albedo.x * k);
        img.rgb[3 * i + 1] = to_byte(albedo.y * k);
        img.rgb[3 * i + 2] = to_byte(albedo.z * k);
    }
    return img;
}

Image normal_image(const FrameBuffer& frame) {
    Image img = blank(frame);
    for (std::size_t i = 0; i < frame.hit.size(); ++i) {
        if (!frame.hit[i] || !frame.normal_valid[i]) continue;
        const Vec3& n = frame.normal[i];
        img.rgb[3 * i + 0] = to_byte(0.5 * n.x + 0.5);
        img.rgb[3 * i + 1] = to_byte(0.5 * n.y + 0.5);
        img.rgb[3 * i + 2] = to_byte(0.5 * n.z + 0.5);
    }
    return img;
}

Image depth_image(const FrameBuffer& frame) {
    Image img = blank(frame);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < frame.hit.size(); ++i) {
        if (!frame.hit[i]) continue;
        lo = std::min(lo, frame.depth[i]);
        hi = std::max(hi, frame.depth[i]);
    }
    const double range = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < frame.hit.size(); ++i) {
        if (!frame.hit[i]) continue;
        const auto g = to_byte(1.0 - 0.8 * (frame.depth[i] - lo) / range);
        img.rgb[3 * i + 0] = img.rgb[3 * i + 1] = img.rgb[3 * i + 2] = g;
    }
    return img;
}

void write_ppm(const Image& image, std::ostream& out) {
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
}

void save_ppm(const Image& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_ppm(image, out);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path.string());
    std::string text(bytes.begin(), bytes.end());
    std::istringstream in(text);
    std::string magic;
    Image img;
    int maxval = 0;
    in >> magic >> img.width >> img.height >> maxval;
    if (!in || magic != "P6" || maxval != 255 || img.width < 1 || img.height < 1) throw FormatError("not a P6 PPM");
    in.get();
    const auto offset = static_cast<std::size_t>(in.tellg());
    const auto n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3;
    if (bytes.size() != offset + n) throw FormatError("PPM pixel data has the wrong size");
    img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
    return img;
}

void write_timing_csv_header(std::ostream& out) { out << "resolution,pixels,ms_trace,ms_normals,evals\n"; }

void write_timing_csv_row(const RenderTiming& timing, std::ostream& out) {
    out << timing.width << 'x' << timing.height << ',' << timing.pixels << ',' << timing.ms_trace << ','
        << timing.ms_normals << ',' << timing.decoder_evals << '\n';
}

}  // namespace nglod
