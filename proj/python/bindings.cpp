#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <stdexcept>

#include "nglod/error.hpp"
#include "nglod/metrics.hpp"
#include "nglod/model_io.hpp"
#include "nglod/renderer.hpp"
#include "nglod/rng.hpp"
#include "nglod/sdf.hpp"
#include "nglod/trainer.hpp"

namespace py = pybind11;
using namespace nglod;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Points& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("expected an (N, 3) array");
    std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
    auto r = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1), r(i, 2)};
    return out;
}

py::array_t<double> from_points(const std::vector<Vec3>& pts) {
    py::array_t<double> a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
    auto w = a.mutable_unchecked<2>();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto k = static_cast<py::ssize_t>(i);
        w(k, 0) = pts[i].x;
        w(k, 1) = pts[i].y;
        w(k, 2) = pts[i].z;
    }
    return a;
}

py::array_t<std::uint8_t> image_array(const Image& img) {
    py::array_t<std::uint8_t> a({py::ssize_t{img.height}, py::ssize_t{img.width}, py::ssize_t{3}});
    std::copy(img.rgb.begin(), img.rgb.end(), a.mutable_data());
    return a;
}

Vec3 to_vec(const std::array<double, 3>& v) { return {v[0], v[1], v[2]}; }

}  // namespace

PYBIND11_MODULE(_nglod, m) {
    m.doc() = "Sparse voxel octree neural signed distance fields";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

    py::class_<DistanceOracle, std::shared_ptr<DistanceOracle>>(m, "Oracle")
        .def("distance", [](const DistanceOracle& o, const Points& p) {
            const auto pts = to_points(p);
            py::array_t<double> out(static_cast<py::ssize_t>(pts.size()));
            auto w = out.mutable_unchecked<1>();
            for (std::size_t i = 0; i < pts.size(); ++i) w(static_cast<py::ssize_t>(i)) = o.distance(pts[i]);
            return out;
        }, py::arg("points"))
        .def("sample_surface", [](const DistanceOracle& o, std::size_t count, std::uint64_t seed) {
            return from_points(o.sample_surface(count, seed));
        }, py::arg("count"), py::arg("seed") = 0);

    m.def("load_oracle", [](const std::filesystem::path& path, double margin) {
        return std::shared_ptr<DistanceOracle>(load_oracle(path, margin));
    }, py::arg("path"), py::arg("mesh_margin") = 0.1, "Mesh (.obj) or scene file.");
    m.def("parse_scene", [](const std::string& text) {
        return std::shared_ptr<DistanceOracle>(std::make_shared<AnalyticSdf>(parse_scene(text)));
    }, py::arg("text"), "Analytic shape from its S-expression, e.g. '(sphere 0.5)'.");

    py::class_<Model>(m, "Model")
        .def_property_readonly("max_lod", [](const Model& md) { return md.field.max_lod(); })
        .def_property_readonly("feature_dim", [](const Model& md) { return md.field.feature_dim; })
        .def_property_readonly("voxel_counts", [](const Model& md) {
            std::vector<std::size_t> v;
            for (int l = 0; l <= md.octree.max_level(); ++l) v.push_back(md.octree.voxel_count(l));
            return v;
        })
        .def_property_readonly("storage_bytes", [](const Model& md) { return storage_bytes(md.octree, md.field.feature_dim); })
        .def_property_readonly("serialized_size", [](const Model& md) { return serialized_size(md); })
        .def("predict", [](const Model& md, const Points& p, double lod) {
            const auto pts = to_points(p);
            py::array_t<double> out(static_cast<py::ssize_t>(pts.size()));
            auto w = out.mutable_unchecked<1>();
            FieldEvaluator eval(md.octree, md.field);
            for (std::size_t i = 0; i < pts.size(); ++i) w(static_cast<py::ssize_t>(i)) = eval.blend(pts[i], lod);
            return out;
        }, py::arg("points"), py::arg("lod"))
        .def("save", [](const Model& md, const std::filesystem::path& path) { save_model(md, path); }, py::arg("path"))
        .def("to_bytes", [](const Model& md) {
            const auto b = encode_model(md);
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        })
        .def("__eq__", [](const Model& a, const Model& b) { return a == b; });

    m.def("load_model", [](const std::filesystem::path& path, std::optional<int> max_lod) {
        return load_model(path, max_lod);
    }, py::arg("path"), py::arg("max_lod") = py::none());

    m.def("fit", [](const DistanceOracle& oracle, int max_lod, int epochs, std::size_t points, std::uint64_t seed,
                    const std::string& schedule, std::size_t octree_samples, const Model* decoder_from) {
        Model md;
        md.octree = build_octree(&oracle, max_lod, oracle.sample_surface(octree_samples, derive_seed(seed, 0x5eed)));
        md.field = init_field(md.octree, {}, derive_seed(seed, 0xf1e1d));
        if (decoder_from) transfer_decoders(decoder_from->field, md.field);
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.points_per_epoch = points;
        cfg.seed = seed;
        cfg.schedule = parse_schedule(schedule);
        TrainResult result;
        {
            py::gil_scoped_release release;
            result = train(oracle, md.octree, md.field, cfg);
        }
        std::vector<std::vector<double>> losses;
        for (const auto& e : result.log) losses.push_back(e.lod_loss);
        return py::make_tuple(md, losses);
    }, py::arg("oracle"), py::arg("max_lod") = 4, py::arg("epochs") = 30, py::arg("points") = 50000,
       py::arg("seed") = 0, py::arg("schedule") = "joint", py::arg("octree_samples") = 1u << 17,
       py::arg("decoder_from") = nullptr,
       "Builds the octree, trains the field and returns (model, per-epoch LOD losses).");

    m.def("render", [](const Model& md, int width, int height, std::optional<double> lod,
                       std::array<double, 3> position, std::array<double, 3> look_at, double fov) {
        Camera cam;
        cam.width = width;
        cam.height = height;
        cam.position = to_vec(position);
        cam.look_at = to_vec(look_at);
        cam.fov_deg = fov;
        RenderConfig cfg;
        cfg.lod = lod;
        RenderResult res;
        {
            py::gil_scoped_release release;
            res = render(cam, md.octree, md.field, cfg);
        }
        py::array_t<bool> hit({py::ssize_t{height}, py::ssize_t{width}});
        py::array_t<double> depth({py::ssize_t{height}, py::ssize_t{width}});
        for (std::size_t i = 0; i < res.frame.hit.size(); ++i) {
            hit.mutable_data()[i] = res.frame.hit[i] != 0;
            depth.mutable_data()[i] = res.frame.depth[i];
        }
        py::dict out;
        out["image"] = image_array(shade(res.frame));
        out["normals"] = image_array(normal_image(res.frame));
        out["hit"] = hit;
        out["depth"] = depth;
        out["decoder_evals"] = res.timing.decoder_evals;
        out["outside_evals"] = res.timing.outside_evals;
        out["ms_trace"] = res.timing.ms_trace;
        out["ms_normals"] = res.timing.ms_normals;
        return out;
    }, py::arg("model"), py::arg("width") = 128, py::arg("height") = 128, py::arg("lod") = py::none(),
       py::arg("position") = std::array<double, 3>{0.0, 0.0, -3.0}, py::arg("look_at") = std::array<double, 3>{0.0, 0.0, 0.0},
       py::arg("fov") = 45.0);

    m.def("chamfer", [](const Points& a, const Points& b) { return chamfer_l1(to_points(a), to_points(b)); },
          py::arg("a"), py::arg("b"), "Chamfer-L1 distance, scaled by 1000.");

    m.def("evaluate", [](const Model& md, const DistanceOracle& oracle, std::size_t chamfer_points,
                         std::size_t giou_points, int cameras, int resolution, std::uint64_t seed) {
        EvalConfig cfg;
        cfg.chamfer_points = chamfer_points;
        cfg.giou_points = giou_points;
        cfg.cameras = cameras;
        cfg.resolution = resolution;
        cfg.seed = seed;
        EvalReport rep;
        {
            py::gil_scoped_release release;
            rep = evaluate_model(md.octree, md.field, oracle, cfg);
        }
        py::list rows;
        for (const auto& r : rep.lods) {
            py::dict d;
            d["lod"] = r.lod;
            d["chamfer_l1_x1000"] = r.chamfer_l1_x1000;
            d["giou"] = r.giou;
            d["iiou"] = r.iiou;
            d["normal_l2"] = r.normal_l2;
            d["storage_bytes"] = r.storage_bytes;
            rows.append(d);
        }
        return rows;
    }, py::arg("model"), py::arg("oracle"), py::arg("chamfer_points") = 1u << 14, py::arg("giou_points") = 1u << 16,
       py::arg("cameras") = 8, py::arg("resolution") = 128, py::arg("seed") = 0);
}
