#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sceneprior/scene.hpp"
#include "sceneprior/shapes.hpp"

using namespace sceneprior;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sceneprior_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Scene sample_scene() {
  Scene s;
  s.categories = CategoryTable({"void", "bed", "table"});
  ObjectInstance a;
  a.label = 1;
  a.center = {0.1, 0.4, -0.3};
  a.size = {2.0, 0.8, 1.5};
  a.mesh = make_box_mesh();
  ObjectInstance b;
  b.label = 2;
  b.center = {1.0 / 3.0, 0.35, 0.7};
  b.size = {0.9, 0.7, 0.6};
  b.mesh = make_icosphere(1).mesh;
  s.objects = {a, b};
  return s;
}

}  // namespace

TEST_CASE("icosphere sizes and topology") {
  for (int s = 0; s <= 3; ++s) {
    TemplateSphere t = make_icosphere(s);
    const std::size_t f = 20u << (2 * s);
    CHECK(t.mesh.faces.size() == f);
    CHECK(t.mesh.vertices.size() == f / 2 + 2);
    CHECK(euler_characteristic(t.mesh) == 2);
    for (const Vec3& v : t.mesh.vertices)
      CHECK(std::abs(std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(make_icosphere(kMaxSubdivisions + 1), Error);
}

TEST_CASE("icosphere area approaches the sphere") {
  const double area = mesh_surface_area(make_icosphere(4).mesh);
  CHECK(area < 4 * M_PI);
  CHECK(area > 0.99 * 4 * M_PI);
}

TEST_CASE("world transform uses half extents") {
  ObjectInstance o;
  o.center = {1, 2, 3};
  o.size = {2, 4, 6};
  o.mesh = make_box_mesh();
  auto [lo, hi] = mesh_bounds(o.world_mesh());
  CHECK(lo == Vec3{0, 0, 0});
  CHECK(hi == Vec3{2, 4, 6});
}

TEST_CASE("category table lookup") {
  CategoryTable t({"void", "bed"});
  CHECK(t.find("bed") == std::optional<std::size_t>(1));
  CHECK_FALSE(t.find("sofa").has_value());
}

TEST_CASE("object validation") {
  ObjectInstance o;
  o.label = 1;
  o.center = {0, 0.5, 0};
  o.mesh = make_box_mesh();
  CHECK_NOTHROW(validate_object(o, 3));
  o.size = {1, 0, 1};
  CHECK_THROWS_AS(validate_object(o, 3), Error);
  o.size = {1, 1, 1};
  o.label = 3;
  try {
    validate_object(o, 3);
    FAIL("expected unknown-category");
  } catch (const Error& e) {
    CHECK(e.code() == "unknown-category");
  }
  o.label = 1;
  o.center = {0, 0.3, 0};
  CHECK_THROWS_AS(validate_object(o, 3), Error);
}

TEST_CASE("scene json round trip is exact") {
  const fs::path dir = temp_dir("scene");
  Scene s = sample_scene();
  write_scene(dir / "scene.json", s);
  Scene r = read_scene(dir / "scene.json");
  REQUIRE(r.objects.size() == 2);
  CHECK(r.categories.names() == s.categories.names());
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r.objects[i].label == s.objects[i].label);
    CHECK(r.objects[i].center == s.objects[i].center);
    CHECK(r.objects[i].size == s.objects[i].size);
    CHECK(r.objects[i].mesh.vertices == s.objects[i].mesh.vertices);
    CHECK(r.objects[i].mesh.faces == s.objects[i].mesh.faces);
  }
}

TEST_CASE("obj round trip") {
  const fs::path dir = temp_dir("obj");
  Mesh m = make_icosphere(1).mesh;
  write_obj(dir / "m.obj", m);
  Mesh r = read_obj(dir / "m.obj");
  CHECK(r.vertices == m.vertices);
  CHECK(r.faces == m.faces);
}

TEST_CASE("malformed scene json is rejected") {
  nlohmann::json j = {{"categories", {"void", "bed"}}, {"objects", {{{"label", 5}}}}};
  CHECK_THROWS_AS(scene_from_json(j), Error);
}

TEST_CASE("shape families fill the unit box") {
  for (const Mesh& m : {make_box_mesh(), make_tapered_box(0.5), make_ellipsoid(2), make_l_shape(0.3, 0.4)}) {
    auto [lo, hi] = mesh_bounds(m);
    for (int a = 0; a < 3; ++a) {
      CHECK(lo[a] == doctest::Approx(-1.0).epsilon(1e-12));
      CHECK(hi[a] == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(euler_characteristic(m) == 2);
  }
}

TEST_CASE("quarter-turn yaw rotation") {
  Mesh m;
  m.vertices = {{1, 0, 0}};
  m.faces = {};
  Mesh r = rotate_yaw(m, 1);
  // Counterclockwise seen from +y: +x goes to -z.
  CHECK(r.vertices[0][0] == doctest::Approx(0.0));
  CHECK(r.vertices[0][2] == doctest::Approx(-1.0));
  Mesh full = rotate_yaw(rotate_yaw(m, 3), 1);
  CHECK(full.vertices == m.vertices);
}

TEST_CASE("default library has two meshes per category") {
  CategoryTable t({"void", "bed", "table", "chair", "cabinet", "lamp"});
  RetrievalLibrary lib = default_library(t);
  CHECK(lib.entries.size() == 10);
  for (int label = 1; label <= 5; ++label) CHECK(lib.shelf(label).size() == 2);
}
