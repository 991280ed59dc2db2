#include "sceneprior/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace sceneprior {

using nlohmann::json;

std::vector<CategoryPrior> DatasetSpec::default_priors() {
  return {{"bed", {1.6, 0.6, 2.0}, {0.15, 0.08, 0.15}},
          {"table", {1.2, 0.75, 0.8}, {0.15, 0.05, 0.1}},
          {"chair", {0.55, 0.95, 0.55}, {0.05, 0.08, 0.05}},
          {"cabinet", {0.9, 1.5, 0.5}, {0.1, 0.15, 0.05}},
          {"lamp", {0.45, 1.4, 0.45}, {0.05, 0.15, 0.05}}};
}

CategoryTable DatasetSpec::categories() const {
  std::vector<std::string> names{"void"};
  for (const auto& p : priors) names.push_back(p.name);
  return CategoryTable(names);
}

void DatasetSpec::validate(std::size_t max_objects_limit) const {
  if (scenes == 0) throw Error("bad-spec", "scene count must be positive");
  if (min_objects < 1 || min_objects > max_objects)
    throw Error("bad-spec", "objects per scene range must satisfy 1 <= min <= max");
  if (max_objects_limit && max_objects > max_objects_limit)
    throw Error("bad-spec", "max_objects " + std::to_string(max_objects) + " exceeds model limit " +
                                std::to_string(max_objects_limit));
  if (views < 4) throw Error("bad-spec", "need at least 4 views per scene");
  if (priors.empty()) throw Error("bad-spec", "need at least one category prior");
  if (!(ring_radius > 0) || !(fov_degrees > 0 && fov_degrees < 180) || image_size < 8 ||
      !(room_half_extent > 0))
    throw Error("bad-spec", "camera ring, field of view, image size and room must be positive");
  for (const auto& p : priors)
    for (int i = 0; i < 3; ++i)
      if (!(p.mean[i] > 0) || p.stddev[i] < 0) throw Error("bad-spec", "bad size prior for " + p.name);
  categories();
}

json to_json(const DatasetSpec& s) {
  json priors = json::array();
  for (const auto& p : s.priors) priors.push_back({{"name", p.name}, {"mean", p.mean}, {"stddev", p.stddev}});
  return {{"scenes", s.scenes},
          {"min_objects", s.min_objects},
          {"max_objects", s.max_objects},
          {"views", s.views},
          {"ring_radius", s.ring_radius},
          {"ring_height", s.ring_height},
          {"fov_degrees", s.fov_degrees},
          {"image_size", s.image_size},
          {"room_half_extent", s.room_half_extent},
          {"seed", s.seed},
          {"priors", priors}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec s;
  try {
    s.scenes = j.value("scenes", s.scenes);
    s.min_objects = j.value("min_objects", s.min_objects);
    s.max_objects = j.value("max_objects", s.max_objects);
    s.views = j.value("views", s.views);
    s.ring_radius = j.value("ring_radius", s.ring_radius);
    s.ring_height = j.value("ring_height", s.ring_height);
    s.fov_degrees = j.value("fov_degrees", s.fov_degrees);
    s.image_size = j.value("image_size", s.image_size);
    s.room_half_extent = j.value("room_half_extent", s.room_half_extent);
    s.seed = j.value("seed", s.seed);
    if (j.contains("priors")) {
      s.priors.clear();
      for (const auto& p : j["priors"])
        s.priors.push_back({p.at("name").get<std::string>(), p.at("mean").get<Vec3>(),
                            p.at("stddev").get<Vec3>()});
    }
  } catch (const json::exception& e) {
    throw Error("bad-spec", e.what());
  }
  s.validate();
  return s;
}

GtView render_view(const Scene& scene, const Camera& camera, const RasterConfig& raster) {
  std::vector<Mesh> meshes;
  for (const auto& obj : scene.objects) meshes.push_back(obj.world_mesh());
  const InstanceIdMap ids = rasterize_instance_ids(meshes, camera, raster);
  GtView view;
  view.camera = camera;
  for (std::size_t j = 0; j < meshes.size(); ++j) {
    view.masks.push_back(ids.mask_of(static_cast<int>(j)));
    const Projection proj = project(meshes[j].vertices, camera);
    const bool visible = view.masks.back().count() >= kMinVisiblePixels && proj.valid_count > 0 &&
                         in_frustum(scene.objects[j].center, camera);
    view.boxes.push_back(visible ? std::optional(box_from_projection(proj)) : std::nullopt);
  }
  return view;
}

std::vector<Camera> ring_cameras(const Scene& scene, const DatasetSpec& spec) {
  Vec3 target{0, 0, 0};
  for (const auto& obj : scene.objects)
    for (int i = 0; i < 3; ++i) target[i] += obj.center[i] / static_cast<double>(scene.objects.size());
  std::vector<Camera> cams;
  for (std::size_t v = 0; v < spec.views; ++v) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(v) / static_cast<double>(spec.views);
    const Vec3 eye{target[0] + spec.ring_radius * std::cos(a), spec.ring_height,
                   target[2] + spec.ring_radius * std::sin(a)};
    cams.push_back(look_at(eye, target, {0, 1, 0}, spec.fov_degrees * std::numbers::pi / 180.0,
                           spec.image_size, spec.image_size));
  }
  return cams;
}

namespace {

bool boxes_overlap(const ObjectInstance& a, const ObjectInstance& b) {
  for (int i = 0; i < 3; ++i)
    if (std::abs(a.center[i] - b.center[i]) >= (a.size[i] + b.size[i]) / 2) return false;
  return true;
}

SceneRecord sample_scene(const DatasetSpec& spec, const CategoryTable& cats,
                         const RetrievalLibrary& lib, std::size_t index) {
  Rng rng(derive_seed(spec.seed, 100, index));
  const RasterConfig raster{spec.image_size, spec.image_size};
  std::size_t tries = 0;
  auto spend = [&] {
    if (++tries > kRejectionBudget)
      throw Error("rejection-budget", "scene " + std::to_string(index) + " needed more than " +
                                          std::to_string(kRejectionBudget) +
                                          " tries; use fewer objects or a larger room");
  };
  std::uniform_int_distribution<std::size_t> count_dist(spec.min_objects, spec.max_objects);
  std::uniform_int_distribution<std::size_t> cat_dist(0, spec.priors.size() - 1);
  std::uniform_real_distribution<double> pos(-spec.room_half_extent, spec.room_half_extent);
  std::normal_distribution<double> normal(0.0, 1.0);
  while (true) {
    Scene scene;
    scene.categories = cats;
    const std::size_t n = count_dist(rng);
    while (scene.objects.size() < n) {
      spend();
      const std::size_t c = cat_dist(rng);
      const CategoryPrior& prior = spec.priors[c];
      ObjectInstance obj;
      obj.label = static_cast<int>(c + 1);
      for (int i = 0; i < 3; ++i) obj.size[i] = std::max(0.1, prior.mean[i] + prior.stddev[i] * normal(rng));
      obj.center = {pos(rng), obj.size[1] / 2, pos(rng)};
      const auto shelf = lib.shelf(obj.label);
      std::uniform_int_distribution<std::size_t> pick(0, shelf.size() - 1);
      obj.mesh = shelf[pick(rng)]->mesh;
      bool clash = false;
      for (const auto& other : scene.objects) clash = clash || boxes_overlap(obj, other);
      if (!clash) scene.objects.push_back(std::move(obj));
    }
    SceneRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "scene_%03zu", index);
    rec.id = id;
    for (const Camera& cam : ring_cameras(scene, spec)) rec.views.push_back(render_view(scene, cam, raster));
    bool covered = true;
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t seen = 0;
      for (const auto& v : rec.views) seen += v.boxes[j].has_value();
      covered = covered && seen >= 2;
    }
    rec.scene = std::move(scene);
    if (covered) return rec;
    spend();
  }
}

json box_json(const Box2D& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box2D box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error("malformed-manifest", "box must have 4 numbers");
  Box2D b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  b.validate();
  return b;
}

std::string view_name(std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%02zu", v);
  return buf;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset data;
  data.categories = spec.categories();
  data.width = data.height = spec.image_size;
  const RetrievalLibrary lib = default_library(data.categories);
  for (std::size_t s = 0; s < spec.scenes; ++s) data.scenes.push_back(sample_scene(spec, data.categories, lib, s));
  return data;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data, const DatasetSpec& spec) {
  std::filesystem::create_directories(dir);
  json scenes = json::array();
  for (const auto& rec : data.scenes) {
    const std::filesystem::path sdir = dir / rec.id;
    write_scene(sdir / "scene.json", rec.scene);
    json views = json::array();
    for (std::size_t v = 0; v < rec.views.size(); ++v) {
      const GtView& view = rec.views[v];
      const std::string vname = rec.id + "/" + view_name(v);
      write_text_file(dir / (vname + ".camera.json"), dump_json(camera_to_json(view.camera)));
      json objects = json::array();
      std::vector<int> labels;
      std::vector<std::string> masks;
      for (std::size_t j = 0; j < view.masks.size(); ++j) {
        const std::string mask = vname + "_track" + std::to_string(j) + ".pgm";
        write_pgm(dir / mask, view.masks[j]);
        json o{{"track", j}, {"label", rec.scene.objects[j].label}, {"mask", mask},
               {"visible", view.boxes[j].has_value()}};
        if (view.boxes[j]) o["box"] = box_json(*view.boxes[j]);
        objects.push_back(std::move(o));
        labels.push_back(rec.scene.objects[j].label);
        masks.push_back(view_name(v) + "_track" + std::to_string(j) + ".pgm");
      }
      write_text_file(dir / (vname + ".json"), dump_json(view_to_json(view, labels, masks)));
      views.push_back({{"camera", vname + ".camera.json"}, {"view", vname + ".json"}, {"objects", objects}});
    }
    scenes.push_back({{"id", rec.id}, {"scene", rec.id + "/scene.json"}, {"views", views}});
  }
  json manifest{{"format", "sceneprior-dataset"},
                {"version", 1},
                {"categories", data.categories.names()},
                {"width", data.width},
                {"height", data.height},
                {"spec", to_json(spec)},
                {"scenes", scenes}};
  write_text_file(dir / "manifest.json", dump_json(manifest));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  Dataset data;
  try {
    if (manifest.value("format", "") != "sceneprior-dataset")
      throw Error("malformed-manifest", "not a dataset manifest: " + (dir / "manifest.json").string());
    data.categories = CategoryTable(manifest.at("categories").get<std::vector<std::string>>());
    data.width = manifest.at("width").get<int>();
    data.height = manifest.at("height").get<int>();
    for (const auto& s : manifest.at("scenes")) {
      SceneRecord rec;
      rec.id = s.at("id").get<std::string>();
      rec.scene = read_scene(dir / s.at("scene").get<std::string>());
      for (const auto& v : s.at("views")) {
        GtView view;
        view.camera = camera_from_json(read_json_file(dir / v.at("camera").get<std::string>()));
        const auto& objects = v.at("objects");
        view.masks.resize(objects.size());
        view.boxes.resize(objects.size());
        for (const auto& o : objects) {
          const auto track = o.at("track").get<std::size_t>();
          if (track >= objects.size() || track >= rec.scene.objects.size())
            throw Error("malformed-manifest", "track id out of range in " + rec.id);
          view.masks[track] = read_pgm(dir / o.at("mask").get<std::string>());
          if (o.value("visible", false)) view.boxes[track] = box_from_json(o.at("box"));
        }
        if (objects.size() != rec.scene.objects.size())
          throw Error("malformed-manifest", "view of " + rec.id + " lists " + std::to_string(objects.size()) +
                                                " objects, scene has " +
                                                std::to_string(rec.scene.objects.size()));
        rec.views.push_back(std::move(view));
      }
      data.scenes.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw Error("malformed-manifest", e.what());
  }
  if (data.scenes.empty()) throw Error("empty-dataset", "manifest lists no scenes");
  return data;
}

Dataset augment_rotations(const Dataset& data) {
  Dataset out = data;
  for (int q = 1; q < 4; ++q) {
    for (const auto& rec : data.scenes) {
      SceneRecord r = rec;
      r.id = rec.id + "_rot" + std::to_string(q * 90);
      for (auto& obj : r.scene.objects) {
        for (int i = 0; i < q; ++i) {
          obj.center = {obj.center[2], obj.center[1], -obj.center[0]};
          obj.size = {obj.size[2], obj.size[1], obj.size[0]};
        }
        obj.mesh = rotate_yaw(obj.mesh, q);
      }
      // With p' = Ry p, R' = R Ry^T keeps every image identical.
      for (auto& view : r.views) {
        auto& R = view.camera.R;
        for (int i = 0; i < q; ++i) {
          // Ry maps (x, y, z) -> (z, y, -x); Ry^T maps (x, y, z) -> (-z, y, x),
          // so the rows of R Ry^T are (r0, r1, r2) -> (r2, r1, -r0).
          for (int row = 0; row < 3; ++row) {
            const double r0 = R[row * 3], r2 = R[row * 3 + 2];
            R[row * 3] = r2;
            R[row * 3 + 2] = -r0;
          }
        }
      }
      out.scenes.push_back(std::move(r));
    }
  }
  return out;
}

json view_to_json(const GtView& view, const std::vector<int>& labels,
                  const std::vector<std::string>& mask_paths) {
  json objects = json::array();
  for (std::size_t j = 0; j < view.boxes.size(); ++j) {
    if (!view.boxes[j]) continue;
    objects.push_back({{"track", j}, {"label", labels[j]}, {"box", box_json(*view.boxes[j])},
                       {"mask", mask_paths[j]}});
  }
  return {{"camera", camera_to_json(view.camera)}, {"objects", objects}};
}

std::pair<GtView, std::vector<int>> read_view(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  GtView view;
  std::vector<int> labels;
  try {
    const auto& cam = j.at("camera");
    view.camera = cam.is_string() ? camera_from_json(read_json_file(path.parent_path() / cam.get<std::string>()))
                                  : camera_from_json(cam);
    for (const auto& o : j.at("objects")) {
      labels.push_back(o.at("label").get<int>());
      view.boxes.push_back(box_from_json(o.at("box")));
      view.masks.push_back(read_pgm(path.parent_path() / o.at("mask").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw Error("malformed-view", path.string() + ": " + e.what());
  }
  if (labels.empty()) throw Error("malformed-view", "view lists no objects");
  return {std::move(view), std::move(labels)};
}

}  // namespace sceneprior
