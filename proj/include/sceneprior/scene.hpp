#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sceneprior/error.hpp"

namespace sceneprior {

using Vec3 = std::array<double, 3>;
using Face = std::array<int, 3>;

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  bool empty() const { return vertices.empty() || faces.empty(); }
};

// Unit-sphere template that shape decoding deforms.
struct TemplateSphere {
  Mesh mesh;
  int subdivisions = 0;
};

inline constexpr int kMaxSubdivisions = 4;
inline constexpr int kDefaultSubdivisions = 2;

TemplateSphere make_icosphere(int subdivisions);

// Elementwise v * scale + offset. Decoded meshes pass half extents s / 2 as
// scale so the unit-sphere template fills its box.
Mesh to_world(const Mesh& canonical, const Vec3& scale, const Vec3& offset);
Vec3 half_extents(const Vec3& size);

int euler_characteristic(const Mesh& mesh);
double mesh_surface_area(const Mesh& mesh);
// Axis-aligned bounds of the vertices as {min, max}.
std::pair<Vec3, Vec3> mesh_bounds(const Mesh& mesh);

class CategoryTable {
 public:
  CategoryTable() = default;
  explicit CategoryTable(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<std::size_t> find(const std::string& name) const;

 private:
  std::vector<std::string> names_;
};

inline constexpr int kVoidLabel = 0;

struct ObjectInstance {
  int label = kVoidLabel;
  Vec3 center{0.0, 0.0, 0.0};
  Vec3 size{1.0, 1.0, 1.0};
  Mesh mesh;  // canonical frame, roughly [-1, 1]^3

  Mesh world_mesh() const { return to_world(mesh, half_extents(size), center); }
};

struct Scene {
  CategoryTable categories;
  std::vector<ObjectInstance> objects;
};

// Throws Error("invalid-object", ...) on nonpositive size or below-floor
// boxes and Error("unknown-category", ...) on labels outside the table.
void validate_object(const ObjectInstance& obj, std::size_t category_count);
void validate_scene(const Scene& scene, std::size_t max_objects = 0);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
void write_scene(const std::filesystem::path& path, const Scene& scene);
Scene read_scene(const std::filesystem::path& path);

// Minimal OBJ subset: "v x y z" and "f a b c" lines with 1-based indices.
void write_obj(const std::filesystem::path& path, const Mesh& mesh);
Mesh read_obj(const std::filesystem::path& path);

// Pretty-printed JSON; doubles use shortest round-trip formatting.
std::string dump_json(const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace sceneprior
