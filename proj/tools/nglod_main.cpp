// nglod: fit, render, evaluate and benchmark sparse-octree neural SDFs.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nglod/error.hpp"
#include "nglod/field.hpp"
#include "nglod/metrics.hpp"
#include "nglod/model_io.hpp"
#include "nglod/octree.hpp"
#include "nglod/parallel.hpp"
#include "nglod/renderer.hpp"
#include "nglod/rng.hpp"
#include "nglod/sdf.hpp"
#include "nglod/trainer.hpp"

namespace fs = std::filesystem;
using namespace nglod;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CameraArgs {
    std::vector<double> eye{0.0, 0.0, -3.0};
    std::vector<double> look_at{0.0, 0.0, 0.0};
    std::vector<double> up{0.0, 1.0, 0.0};
    double fov = 45.0;
    int width = 256;
    int height = 256;

    Camera camera() const {
        Camera c;
        c.position = {eye[0], eye[1], eye[2]};
        c.look_at = {look_at[0], look_at[1], look_at[2]};
        c.up = {up[0], up[1], up[2]};
        c.fov_deg = fov;
        c.width = width;
        c.height = height;
        return c;
    }
};

struct TraceArgs {
    double delta = 0.0003;
    int max_iters = 200;
    double far_plane = 5.0;
    double normal_eps = 0.0;
    std::vector<double> thresholds;

    RenderConfig config() const {
        RenderConfig c;
        c.delta = delta;
        c.max_iters = max_iters;
        c.far_plane = far_plane;
        c.normal_eps = normal_eps;
        c.lod_thresholds = thresholds;
        return c;
    }
};

void add_camera_options(CLI::App* cmd, CameraArgs& a) {
    cmd->add_option("--eye", a.eye, "Camera position")->expected(3);
    cmd->add_option("--look-at", a.look_at, "Point the camera looks at")->expected(3);
    cmd->add_option("--up", a.up, "Camera up vector")->expected(3);
    cmd->add_option("--fov", a.fov, "Vertical field of view in degrees");
    cmd->add_option("--width", a.width, "Image width in pixels");
    cmd->add_option("--height", a.height, "Image height in pixels");
}

void add_trace_options(CLI::App* cmd, TraceArgs& a) {
    cmd->add_option("--delta", a.delta, "Sphere tracing hit threshold");
    cmd->add_option("--max-iters", a.max_iters, "Sphere tracing iteration cap");
    cmd->add_option("--far", a.far_plane, "Far plane distance");
    cmd->add_option("--normal-eps", a.normal_eps, "Normal finite-difference step (0: 1/r_Lmax)");
    cmd->add_option("--lod-thresholds", a.thresholds, "Distances for automatic LOD selection (one per LOD)")
        ->delimiter(',');
}

void require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " not found: " + path);
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

Model load_checked(const std::string& path, std::optional<int> max_lod) {
    require_file(path, "model");
    return load_model(path, max_lod);
}

// Fills options not given on the command line from a key = value file. Keys
// are long option names without dashes; "-" and "_" are interchangeable.
void apply_config_file(CLI::App* cmd, const std::string& path) {
    require_file(path, "config file");
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_file(path);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string("config file: ") + e.what());
    }
    for (const auto& item : items) {
        if (!item.parents.empty() || item.name == "++" || item.name == "--") {
            if (item.name == "++" || item.name == "--") continue;  // section markers
            throw ConfigError("config file: sections are not supported (" + item.fullname() + ")");
        }
        std::string key = item.name;
        std::replace(key.begin(), key.end(), '_', '-');
        CLI::Option* opt = key == "config" ? nullptr : cmd->get_option_no_throw("--" + key);
        if (opt == nullptr || opt->get_positional()) {
            throw ConfigError("config file: unknown key '" + item.name + "' for " + cmd->get_name());
        }
        if (opt->count() > 0) continue;
        try {
            for (const auto& v : item.inputs) opt->add_result(v);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw ConfigError("config file: bad value for '" + item.name + "': " + e.what());
        }
    }
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string input;
    std::string output = "model.ngld";
    std::string log;
    std::string decoder_from;
    int max_lod = 4;
    int r0 = 4;
    int feature_dim = kDefaultFeatureDim;
    int hidden_dim = kDefaultHiddenDim;
    int epochs = 30;
    std::size_t points = 50000;
    std::size_t batch = 512;
    double lr = 1e-3;
    std::string schedule = "joint";
    int interval = 100;
    std::uint64_t seed = 0;
    std::size_t octree_samples = 1u << 17;
    double margin = 0.1;
    int checkpoint_every = 0;
    bool quiet = false;
};

int cmd_fit(const FitArgs& a) {
    require_file(a.input, "input geometry");
    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.points_per_epoch = a.points;
    tc.batch_size = a.batch;
    tc.learning_rate = a.lr;
    tc.schedule = parse_schedule(a.schedule);
    tc.progressive_interval = a.interval;
    tc.seed = a.seed;
    tc.validate();
    if (a.max_lod < 1 || a.max_lod > 12) throw ConfigError("--max-lod must be in [1, 12]");
    if (a.r0 < 1 || (a.r0 & (a.r0 - 1)) != 0) throw ConfigError("--r0 must be a power of two");
    if (a.margin < 0.0 || a.margin >= 1.0) throw ConfigError("--margin must be in [0, 1)");

    const auto oracle = load_oracle(a.input, a.margin);
    const auto surface = oracle->sample_surface(a.octree_samples, derive_seed(a.seed, 0x5eed));
    Model model;
    model.octree = build_octree(oracle.get(), a.max_lod, surface, static_cast<std::uint32_t>(a.r0));
    model.field = init_field(model.octree, {a.feature_dim, a.hidden_dim}, derive_seed(a.seed, 0xf1e1d));
    if (!a.decoder_from.empty()) {
        const Model source = load_checked(a.decoder_from, std::nullopt);
        transfer_decoders(source.field, model.field);
    }
    if (!a.quiet) {
        std::fprintf(stderr, "octree: %d LODs, %zu feature voxels, %u corners\n", a.max_lod,
                     model.octree.feature_voxel_count(), model.octree.corner_count());
    }

    const auto result = train(*oracle, model.octree, model.field, tc, [&](const EpochLog& e, const NeuralField& f) {
        if (!a.quiet) {
            std::fprintf(stderr, "epoch %d (%.2fs) loss", e.epoch, e.seconds);
            for (double v : e.lod_loss) std::fprintf(stderr, " %.3g", v);
            std::fprintf(stderr, "\n");
        }
        if (a.checkpoint_every > 0 && (e.epoch + 1) % a.checkpoint_every == 0) {
            save_model({model.octree, f}, a.output + ".epoch" + std::to_string(e.epoch + 1));
        }
    });
    save_model(model, a.output);
    if (!a.log.empty()) {
        auto out = open_output(a.log);
        write_train_log_csv(result, a.max_lod, out);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string model;
    std::string output = "render.ppm";
    std::string normal_out;
    std::string depth_out;
    std::string timing;
    std::optional<double> lod;
    std::optional<int> max_lod;
    CameraArgs camera;
    TraceArgs trace;
};

int cmd_render(const RenderArgs& a) {
    const Model model = load_checked(a.model, a.max_lod);
    RenderConfig cfg = a.trace.config();
    cfg.lod = a.lod;
    cfg.validate();
    const Camera cam = a.camera.camera();
    cam.validate();
    resolve_lod(cam, model.octree, cfg);  // range check before any work
    const auto result = render(cam, model.octree, model.field, cfg);
    save_ppm(shade(result.frame), a.output);
    if (!a.normal_out.empty()) save_ppm(normal_image(result.frame), a.normal_out);
    if (!a.depth_out.empty()) save_ppm(depth_image(result.frame), a.depth_out);
    if (!a.timing.empty()) {
        auto out = open_output(a.timing);
        write_timing_csv_header(out);
        write_timing_csv_row(result.timing, out);
    }
    if (result.timing.outside_evals != 0) {
        std::fprintf(stderr, "error: %llu decoder evaluations outside occupied voxels\n",
                     static_cast<unsigned long long>(result.timing.outside_evals));
        return kExitRuntime;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string model;
    std::string reference;
    std::string csv;
    std::string text;
    std::optional<int> max_lod;
    double margin = 0.1;
    EvalConfig config;
    bool no_images = false;
};

int cmd_eval(EvalArgs a) {
    const Model model = load_checked(a.model, a.max_lod);
    require_file(a.reference, "reference geometry");
    const auto oracle = load_oracle(a.reference, a.margin);
    a.config.image_metrics = !a.no_images;
    if (a.config.chamfer_points == 0 || a.config.giou_points == 0 || a.config.cameras < 1 || a.config.resolution < 1) {
        throw ConfigError("eval: point counts, cameras and resolution must be positive");
    }
    const auto report = evaluate_model(model.octree, model.field, *oracle, a.config);
    write_eval_text(report, std::cout);
    if (!a.csv.empty()) {
        auto out = open_output(a.csv);
        write_eval_csv(report, out);
    }
    if (!a.text.empty()) {
        auto out = open_output(a.text);
        write_eval_text(report, out);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string model;
    std::string output = "bench.csv";
    std::vector<int> resolutions{64, 128, 256};
    std::vector<double> lods;
    int runs = 5;
    std::optional<int> max_lod;
    CameraArgs camera;
    TraceArgs trace;
};

int cmd_bench(const BenchArgs& a) {
    const Model model = load_checked(a.model, a.max_lod);
    if (a.resolutions.empty()) throw ConfigError("bench: no resolutions given");
    for (int r : a.resolutions) {
        if (r < 1) throw ConfigError("bench: resolutions must be positive");
    }
    std::vector<double> lods = a.lods;
    if (lods.empty()) lods.push_back(static_cast<double>(model.field.max_lod()));
    for (double l : lods) {
        if (!(l >= 1.0 && l <= static_cast<double>(model.field.max_lod()))) {
            throw ConfigError("bench: LOD " + std::to_string(l) + " outside [1, " +
                              std::to_string(model.field.max_lod()) + "]");
        }
    }
    RenderConfig cfg = a.trace.config();
    cfg.validate();
    const Camera cam = a.camera.camera();
    cam.validate();
    std::printf("workers: %d\n", worker_count());
    for (double lod : lods) {
        const double single[] = {lod};
        const auto rows = bench_frame(model.octree, model.field, cam, a.resolutions, single, a.runs, cfg);
        std::string path = a.output;
        if (lods.size() > 1) {
            const fs::path p(a.output);
            std::ostringstream name;
            name << p.stem().string() << "_lod" << lod << p.extension().string();
            path = (p.parent_path() / name.str()).string();
        }
        auto out = open_output(path);
        write_bench_csv(rows, out);
        for (const auto& r : rows) {
            std::printf("lod %g  %4dx%-4d  pixels %7zu  trace %9.2f ms  normals %8.2f ms  evals %llu\n", lod,
                        r.resolution, r.resolution, r.pixels, r.ms_trace, r.ms_normals,
                        static_cast<unsigned long long>(r.evals));
            if (r.outside_evals != 0) {
                std::fprintf(stderr, "error: decoder evaluations outside occupied voxels\n");
                return kExitRuntime;
            }
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_inspect(const std::string& path, std::optional<int> max_lod) {
    const Model model = load_checked(path, max_lod);
    const auto& svo = model.octree;
    std::printf("format version   %u\n", kModelVersion);
    std::printf("r0               %u\n", svo.initial_resolution());
    std::printf("max LOD          %d\n", svo.max_level());
    std::printf("feature dim      %d\n", model.field.feature_dim);
    std::printf("hidden dim       %d\n", model.field.hidden_dim);
    std::printf("decoder params   %zu per LOD\n", model.field.decoders.front().parameter_count());
    for (int l = 0; l <= svo.max_level(); ++l) {
        std::printf("level %-2d res %-5u voxels %zu\n", l, svo.level(l).resolution, svo.voxel_count(l));
    }
    std::printf("corners          %u\n", svo.corner_count());
    std::printf("storage estimate %zu bytes ((m+1)|V|, |V| = %zu)\n", storage_bytes(svo, model.field.feature_dim),
                svo.feature_voxel_count());
    std::printf("serialized size  %zu bytes\n", serialized_size(model));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse voxel octree neural SDF toolkit"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    int workers = 0;
    app.add_option("--workers", workers, "Worker threads (default: NGLOD_WORKERS or all cores)");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a scene file or OBJ mesh");
    fit_cmd->add_option("input", fit.input, "Scene (.sdf s-expression) or mesh (.obj)")->required();
    fit_cmd->add_option("-o,--output", fit.output, "Model file to write");
    fit_cmd->add_option("--log", fit.log, "Training log CSV");
    fit_cmd->add_option("--max-lod", fit.max_lod, "Number of LODs");
    fit_cmd->add_option("--r0", fit.r0, "Resolution of feature level 0");
    fit_cmd->add_option("--feature-dim", fit.feature_dim, "Feature channels m");
    fit_cmd->add_option("--hidden-dim", fit.hidden_dim, "Decoder hidden width h");
    fit_cmd->add_option("--epochs", fit.epochs, "Training epochs");
    fit_cmd->add_option("--points", fit.points, "Samples per epoch");
    fit_cmd->add_option("--batch", fit.batch, "Batch size");
    fit_cmd->add_option("--lr", fit.lr, "Adam learning rate");
    fit_cmd->add_option("--schedule", fit.schedule, "joint, progressive or frozen_decoder");
    fit_cmd->add_option("--interval", fit.interval, "Epochs between added LODs (progressive)");
    fit_cmd->add_option("--seed", fit.seed, "Random seed");
    fit_cmd->add_option("--octree-samples", fit.octree_samples, "Surface samples used to build the octree");
    fit_cmd->add_option("--margin", fit.margin, "Mesh normalization margin");
    fit_cmd->add_option("--decoder-from", fit.decoder_from, "Start from the decoders of this model");
    fit_cmd->add_option("--checkpoint-every", fit.checkpoint_every, "Write a checkpoint every N epochs");
    fit_cmd->add_flag("-q,--quiet", fit.quiet, "No progress output");

    RenderArgs ren;
    auto* ren_cmd = app.add_subcommand("render", "Sphere trace a model to PPM");
    ren_cmd->add_option("model", ren.model, "Model file")->required();
    ren_cmd->add_option("-o,--output", ren.output, "Color image (PPM)");
    ren_cmd->add_option("--normals", ren.normal_out, "Normal map (PPM)");
    ren_cmd->add_option("--depth", ren.depth_out, "Depth map (PPM)");
    ren_cmd->add_option("--timing", ren.timing, "Timing CSV");
    ren_cmd->add_option("--lod", ren.lod, "Continuous LOD in [1, L_max]");
    ren_cmd->add_option("--max-lod", ren.max_lod, "Truncate the model to this many LODs");
    add_camera_options(ren_cmd, ren.camera);
    add_trace_options(ren_cmd, ren.trace);

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "Geometry and image metrics against a reference");
    ev_cmd->add_option("model", ev.model, "Model file")->required();
    ev_cmd->add_option("reference", ev.reference, "Reference scene or mesh")->required();
    ev_cmd->add_option("--csv", ev.csv, "Report CSV");
    ev_cmd->add_option("--text", ev.text, "Report text file");
    ev_cmd->add_option("--max-lod", ev.max_lod, "Truncate the model to this many LODs");
    ev_cmd->add_option("--margin", ev.margin, "Mesh normalization margin");
    ev_cmd->add_option("--chamfer-points", ev.config.chamfer_points, "Surface points per set");
    ev_cmd->add_option("--giou-points", ev.config.giou_points, "Uniform points for gIoU");
    ev_cmd->add_option("--cameras", ev.config.cameras, "Views for image metrics");
    ev_cmd->add_option("--resolution", ev.config.resolution, "Image metric resolution");
    ev_cmd->add_option("--seed", ev.config.seed, "Random seed");
    ev_cmd->add_flag("--no-images", ev.no_images, "Skip image metrics");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Frame time and decoder evaluation benchmark");
    bench_cmd->add_option("model", bench.model, "Model file")->required();
    bench_cmd->add_option("-o,--output", bench.output, "Benchmark CSV");
    bench_cmd->add_option("--resolutions", bench.resolutions, "Square image sizes")->delimiter(',');
    bench_cmd->add_option("--lods", bench.lods, "LODs to benchmark (default L_max)")->delimiter(',');
    bench_cmd->add_option("--runs", bench.runs, "Timed runs per row (median reported)");
    bench_cmd->add_option("--max-lod", bench.max_lod, "Truncate the model to this many LODs");
    add_camera_options(bench_cmd, bench.camera);
    add_trace_options(bench_cmd, bench.trace);

    std::string inspect_path;
    std::optional<int> inspect_max_lod;
    auto* ins_cmd = app.add_subcommand("inspect", "Print model header and storage estimate");
    ins_cmd->add_option("model", inspect_path, "Model file")->required();
    ins_cmd->add_option("--max-lod", inspect_max_lod, "Truncate the model to this many LODs");

    std::string config_path;
    for (auto* cmd : {fit_cmd, ren_cmd, ev_cmd, bench_cmd, ins_cmd}) {
        cmd->add_option("--config", config_path, "key = value settings file; command-line flags win");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (!config_path.empty()) apply_config_file(app.get_subcommands().front(), config_path);
        if (workers != 0) {
            if (workers < 0) throw ConfigError("--workers must be positive");
            set_worker_count(workers);
        }
        if (*fit_cmd) return cmd_fit(fit);
        if (*ren_cmd) return cmd_render(ren);
        if (*ev_cmd) return cmd_eval(ev);
        if (*bench_cmd) return cmd_bench(bench);
        if (*ins_cmd) return cmd_inspect(inspect_path, inspect_max_lod);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const RangeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
