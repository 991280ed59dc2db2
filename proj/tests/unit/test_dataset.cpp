#include <doctest.h>

#include <filesystem>

#include "sceneprior/dataset.hpp"

using namespace sceneprior;
namespace fs = std::filesystem;

namespace {

DatasetSpec small_spec() {
  DatasetSpec s;
  s.scenes = 3;
  s.views = 8;
  s.image_size = 32;
  s.seed = 5;
  return s;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sceneprior_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("generated scenes are valid, non-overlapping and covered") {
  const DatasetSpec spec = small_spec();
  Dataset d = generate_dataset(spec);
  REQUIRE(d.scenes.size() == 3);
  for (const auto& rec : d.scenes) {
    const auto& objs = rec.scene.objects;
    CHECK(objs.size() >= spec.min_objects);
    CHECK(objs.size() <= spec.max_objects);
    CHECK_NOTHROW(validate_scene(rec.scene));
    for (std::size_t a = 0; a < objs.size(); ++a)
      for (std::size_t b = a + 1; b < objs.size(); ++b) {
        bool separated = false;
        for (int i = 0; i < 3; ++i)
          separated = separated ||
                      std::abs(objs[a].center[i] - objs[b].center[i]) >= (objs[a].size[i] + objs[b].size[i]) / 2;
        CHECK(separated);
      }
    CHECK(rec.views.size() == spec.views);
    for (std::size_t j = 0; j < objs.size(); ++j) {
      std::size_t seen = 0;
      for (const auto& v : rec.views) {
        if (!v.boxes[j]) continue;
        ++seen;
        CHECK(v.masks[j].count() >= kMinVisiblePixels);
      }
      CHECK(seen >= 2);
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  DatasetSpec s = small_spec();
  Dataset a = generate_dataset(s), b = generate_dataset(s);
  s.seed = 6;
  Dataset c = generate_dataset(s);
  CHECK(scene_to_json(a.scenes[1].scene) == scene_to_json(b.scenes[1].scene));
  CHECK(a.scenes[1].views[3].masks[0].data == b.scenes[1].views[3].masks[0].data);
  CHECK(scene_to_json(a.scenes[0].scene) != scene_to_json(c.scenes[0].scene));
}

TEST_CASE("rendered boxes enclose the masks") {
  Dataset d = generate_dataset(small_spec());
  for (const auto& v : d.scenes[0].views)
    for (std::size_t j = 0; j < v.masks.size(); ++j) {
      if (!v.boxes[j]) continue;
      const Mask& m = v.masks[j];
      const Box2D& b = *v.boxes[j];
      for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c) {
          if (!m.data[r * m.width + c]) continue;
          CHECK((c + 0.5) / m.width >= b.x1 - 1e-12);
          CHECK((c + 0.5) / m.width <= b.x2 + 1e-12);
          CHECK((r + 0.5) / m.height >= b.y1 - 1e-12);
          CHECK((r + 0.5) / m.height <= b.y2 + 1e-12);
        }
    }
}

TEST_CASE("rotation augmentation reproduces the original images") {
  Dataset d = generate_dataset(small_spec());
  Dataset aug = augment_rotations(d);
  REQUIRE(aug.scenes.size() == 12);
  const RasterConfig raster{32, 32, 8, 1e-4, 1e-4};
  for (std::size_t q = 1; q < 4; ++q) {
    const SceneRecord& rot = aug.scenes[q * 3 + 1];
    const SceneRecord& orig = d.scenes[1];
    CHECK(rot.id == orig.id + "_rot" + std::to_string(q * 90));
    for (std::size_t v : {0, 5}) {
      GtView rerender = render_view(rot.scene, rot.views[v].camera, raster);
      for (std::size_t j = 0; j < orig.scene.objects.size(); ++j) {
        const double iou = mask_iou(rerender.masks[j], orig.views[v].masks[j]);
        if (orig.views[v].masks[j].count() > 0) CHECK(iou > 0.98);
      }
    }
  }
}

TEST_CASE("dataset round trip through disk") {
  const DatasetSpec spec = small_spec();
  Dataset d = generate_dataset(spec);
  const fs::path dir = temp_dir("dataset");
  write_dataset(dir, d, spec);
  Dataset r = load_dataset(dir);
  REQUIRE(r.scenes.size() == d.scenes.size());
  CHECK(r.width == 32);
  CHECK(r.categories.names() == d.categories.names());
  for (std::size_t s = 0; s < d.scenes.size(); ++s) {
    CHECK(scene_to_json(r.scenes[s].scene) == scene_to_json(d.scenes[s].scene));
    for (std::size_t v = 0; v < d.scenes[s].views.size(); ++v) {
      const GtView &a = d.scenes[s].views[v], &b = r.scenes[s].views[v];
      CHECK(a.camera.R == b.camera.R);
      for (std::size_t j = 0; j < a.boxes.size(); ++j) {
        CHECK(a.boxes[j].has_value() == b.boxes[j].has_value());
        if (a.boxes[j]) CHECK(a.boxes[j]->as_array() == b.boxes[j]->as_array());
        if (a.boxes[j]) CHECK(a.masks[j].data == b.masks[j].data);
      }
    }
  }
}

TEST_CASE("missing or malformed datasets fail with codes") {
  const fs::path dir = temp_dir("missing");
  CHECK_THROWS_AS(load_dataset(dir), Error);
  write_text_file(dir / "manifest.json", "{\"scenes\": 3}");
  CHECK_THROWS_AS(load_dataset(dir), Error);
}

TEST_CASE("spec validation") {
  DatasetSpec s = small_spec();
  s.min_objects = 4;
  s.max_objects = 3;
  CHECK_THROWS_AS(s.validate(), Error);
  s = small_spec();
  s.max_objects = 9;
  CHECK_THROWS_AS(s.validate(8), Error);
  DatasetSpec r = dataset_spec_from_json(to_json(small_spec()));
  CHECK(r.views == 8);
  CHECK(r.priors.size() == small_spec().priors.size());
}
