#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

#include "sceneprior/gradcheck.hpp"
#include "sceneprior/tasks.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace sceneprior;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text through the stdlib json module.
py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
  if (o.is_none()) return json::object();
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<Vec3> points_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw Error("shape-mismatch", "points must be an (n, 3) array");
  std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1), r(i, 2)};
  return out;
}

Scene scene_from(const py::object& o) { return scene_from_json(from_py(o)); }

class PyModel {
 public:
  explicit PyModel(const fs::path& checkpoint) : model_(load_model(checkpoint)) {}
  explicit PyModel(std::unique_ptr<Model> m) : model_(std::move(m)) {}

  const Model& get() const { return *model_; }

 private:
  std::unique_ptr<Model> model_;
};

ReconstructResult reconstruct_file(const PyModel& m, const fs::path& view_path,
                                   std::size_t iterations, std::size_t restarts,
                                   std::optional<std::size_t> init_scene) {
  auto [view, labels] = read_view(view_path);
  ReconstructConfig rc;
  rc.iterations = iterations;
  rc.restarts = restarts;
  rc.raster.width = view.camera.width;
  rc.raster.height = view.camera.height;
  if (init_scene) {
    if (*init_scene >= m.get().config().num_scenes) throw Error("bad-config", "init scene not in checkpoint");
    rc.init_logits = m.get().embedding(*init_scene).values;
  }
  return reconstruct_single_view(m.get(), view, labels, rc);
}

}  // namespace

PYBIND11_MODULE(_sceneprior, m) {
  m.doc() = "3D scene prior trained from posed 2D instance masks.";

  static py::exception<Error> error(m, "SceneError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), (e.code() + ": " + e.what()).c_str());
    }
  });

  m.def("generate_dataset",
        [](const fs::path& out, const py::object& spec) {
          const DatasetSpec s = spec.is_none() ? DatasetSpec{} : dataset_spec_from_json(from_py(spec));
          write_dataset(out, generate_dataset(s), s);
          return load_dataset(out).scenes.size();
        },
        py::arg("out"), py::arg("spec") = py::none(),
        "Writes the procedural dataset to `out`; returns the scene count.");

  m.def("default_train_config", [] { return to_py(to_json(TrainConfig{})); });
  m.def("default_dataset_spec", [] { return to_py(to_json(DatasetSpec{})); });

  py::class_<PyModel>(m, "Model")
      .def(py::init<const fs::path&>(), py::arg("checkpoint"))
      .def_property_readonly("config", [](const PyModel& self) { return to_py(to_json(self.get().config())); })
      .def_property_readonly("latent_dim", [](const PyModel& self) { return self.get().config().generator.d_model; })
      .def("synthesize",
           [](const PyModel& self, std::uint64_t seed) { return to_py(scene_to_json(synthesize(self.get(), seed))); },
           py::arg("seed"))
      .def("decode",
           [](const PyModel& self, const std::vector<double>& z) {
             if (std::abs(l2_norm(z) - 1.0) > 1e-9) throw Error("bad-latent", "latent must have unit norm");
             return to_py(scene_to_json(self.get().decode_scene(z)));
           },
           py::arg("z"))
      .def("scene_latent",
           [](const PyModel& self, std::size_t s) {
             if (s >= self.get().config().num_scenes) throw Error("bad-latent", "scene not in checkpoint");
             return self.get().scene_latent(s);
           },
           py::arg("scene"))
      .def("random_latent",
           [](const PyModel& self, std::uint64_t seed) { return random_latent(self.get().anchors(), seed); },
           py::arg("seed"))
      .def("interpolate",
           [](const PyModel& self, const std::vector<double>& za, const std::vector<double>& zb, std::size_t steps) {
             py::list out;
             for (const auto& s : interpolate(self.get(), za, zb, steps)) out.append(to_py(scene_to_json(s)));
             return out;
           },
           py::arg("z_a"), py::arg("z_b"), py::arg("steps"))
      .def("reconstruct",
           [](const PyModel& self, const fs::path& view, std::size_t iterations, std::size_t restarts,
              std::optional<std::size_t> init_scene) {
             const ReconstructResult r = reconstruct_file(self, view, iterations, restarts, init_scene);
             py::dict d;
             d["scene"] = to_py(scene_to_json(r.scene));
             d["z"] = r.z;
             d["final_loss"] = r.final_loss;
             return d;
           },
           py::arg("view"), py::arg("iterations") = 1000, py::arg("restarts") = 7,
           py::arg("init_scene") = py::none(),
           "Fits a fresh latent to one annotated view file.");

  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const fs::path& data_dir, const py::object& config,
                       std::optional<fs::path> resume) {
             const TrainConfig c = config.is_none() ? TrainConfig{} : train_config_from_json(from_py(config));
             const Dataset data = load_dataset(data_dir);
             return resume ? std::make_unique<Trainer>(data, c, *resume) : std::make_unique<Trainer>(data, c);
           }),
           py::arg("data_dir"), py::arg("config") = py::none(), py::arg("resume") = py::none())
      .def_property_readonly("epoch", &Trainer::epoch)
      .def_property_readonly("finished", &Trainer::finished)
      .def("run_epoch",
           [](Trainer& t) {
             const EpochRecord r = t.run_epoch();
             py::dict d;
             d["epoch"] = r.epoch;
             d["stage"] = r.stage;
             d["lr"] = r.lr;
             d["loss"] = r.loss;
             d["label"] = r.label;
             d["box"] = r.box;
             d["completeness"] = r.completeness;
             d["frustum"] = r.frustum;
             d["shape"] = r.shape;
             d["completeness_accuracy"] = r.completeness_accuracy;
             return d;
           })
      .def("run",
           [](Trainer& t, std::optional<std::size_t> end, std::optional<fs::path> log) {
             std::ofstream f;
             if (log) {
               f.open(*log);
               if (!f) throw Error("io", "cannot open " + log->string());
               write_metrics_header(f);
             }
             py::gil_scoped_release release;
             t.run(end.value_or(t.config().total_epochs()), f.is_open() ? &f : nullptr);
           },
           py::arg("end_epoch") = py::none(), py::arg("log") = py::none())
      .def("save", &Trainer::save, py::arg("path"))
      .def("evaluate", [](const Trainer& t) {
        RasterConfig raster = t.config().raster;
        raster.width = t.data().width;
        raster.height = t.data().height;
        return to_py(to_json(evaluate_model(t.model(), t.data(), t.config().weights, raster)));
      });

  m.def("gradcheck",
        [](std::size_t points, std::uint64_t seed) {
          GradcheckOptions o;
          o.primitive_points = points;
          o.seed = seed;
          return to_py(to_json(run_gradcheck_suite(o)));
        },
        py::arg("points") = 100, py::arg("seed") = 0);

  m.def("hungarian",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cost) {
          if (cost.ndim() != 2) throw Error("shape-mismatch", "cost must be a 2D array");
          CostMatrix c{static_cast<std::size_t>(cost.shape(0)), static_cast<std::size_t>(cost.shape(1)),
                       std::vector<double>(cost.data(), cost.data() + cost.size())};
          const MatchAssignment a = hungarian(c);
          return py::make_tuple(a.pred_to_gt, a.total_cost);
        },
        py::arg("cost"), "Returns (row -> column or -1, total cost).");

  m.def("slerp", [](const std::vector<double>& a, const std::vector<double>& b, double t) { return slerp(a, b, t); },
        py::arg("a"), py::arg("b"), py::arg("t"));
  m.def("box_iou_3d", &box_iou_3d, py::arg("center_a"), py::arg("size_a"), py::arg("center_b"), py::arg("size_b"));
  m.def("chamfer_distance",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
          return chamfer_distance(points_from(a), points_from(b));
        },
        py::arg("a"), py::arg("b"));
  m.def("category_kl", [](const std::vector<double>& p, const std::vector<double>& q) { return category_kl(p, q); },
        py::arg("p"), py::arg("q"));
  m.def("compute_metrics",
        [](const py::list& pred, const py::list& gt) {
          std::vector<Scene> p, g;
          for (const auto& s : pred) p.push_back(scene_from(py::reinterpret_borrow<py::object>(s)));
          for (const auto& s : gt) g.push_back(scene_from(py::reinterpret_borrow<py::object>(s)));
          return to_py(to_json(compute_metrics(p, g)));
        },
        py::arg("pred"), py::arg("gt"));

  m.def("render_silhouette",
        [](const py::object& scene, const py::object& camera) {
          const Scene s = scene_from(scene);
          const Camera cam = camera_from_json(from_py(camera));
          RasterConfig rc;
          rc.width = cam.width;
          rc.height = cam.height;
          py::array_t<double> out({cam.height, cam.width});
          auto w = out.mutable_unchecked<2>();
          for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) w(y, x) = 0.0;
          for (const auto& o : s.objects) {
            const Mesh& canonical = o.mesh.vertices.empty() ? make_box_mesh() : o.mesh;
            const SilhouetteMap sil = rasterize_silhouette(to_world(canonical, half_extents(o.size), o.center), cam, rc);
            for (int y = 0; y < cam.height; ++y)
              for (int x = 0; x < cam.width; ++x)
                w(y, x) = 1.0 - (1.0 - w(y, x)) * (1.0 - sil.values[static_cast<std::size_t>(y * cam.width + x)]);
          }
          return out;
        },
        py::arg("scene"), py::arg("camera"), "Union of soft silhouettes, (height, width).");
}
