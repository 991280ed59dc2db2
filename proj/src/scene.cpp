#include "sceneprior/scene.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sceneprior {

using nlohmann::json;

namespace {

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

Vec3 vec3_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw Error("malformed-scene", std::string(what) + " must be an array of 3 numbers");
  Vec3 v{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw Error("malformed-scene", std::string(what) + " entries must be numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

}  // namespace

TemplateSphere make_icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > kMaxSubdivisions)
    throw Error("bad-config", "icosphere subdivisions must be in [0, " +
                                  std::to_string(kMaxSubdivisions) + "], got " +
                                  std::to_string(subdivisions));
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh mesh;
  mesh.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                   {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : mesh.vertices) v = normalized(v);
  mesh.faces = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      const Vec3& va = mesh.vertices[static_cast<std::size_t>(a)];
      const Vec3& vb = mesh.vertices[static_cast<std::size_t>(b)];
      mesh.vertices.push_back(
          normalized({(va[0] + vb[0]) / 2, (va[1] + vb[1]) / 2, (va[2] + vb[2]) / 2}));
      const int id = static_cast<int>(mesh.vertices.size() - 1);
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(mesh.faces.size() * 4);
    for (const Face& f : mesh.faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.faces = std::move(next);
  }
  return {std::move(mesh), subdivisions};
}

Vec3 half_extents(const Vec3& size) { return {size[0] / 2, size[1] / 2, size[2] / 2}; }

Mesh to_world(const Mesh& canonical, const Vec3& scale, const Vec3& offset) {
  for (double s : scale)
    if (!(s > 0.0)) throw Error("nonpositive-size", "world transform needs positive scale");
  Mesh out;
  out.faces = canonical.faces;
  out.vertices.reserve(canonical.vertices.size());
  for (const Vec3& v : canonical.vertices)
    out.vertices.push_back({v[0] * scale[0] + offset[0], v[1] * scale[1] + offset[1],
                            v[2] * scale[2] + offset[2]});
  return out;
}

int euler_characteristic(const Mesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (const Face& f : mesh.faces)
    for (int k = 0; k < 3; ++k) edges.insert(std::minmax(f[k], f[(k + 1) % 3]));
  return static_cast<int>(mesh.vertices.size()) - static_cast<int>(edges.size()) +
         static_cast<int>(mesh.faces.size());
}

double mesh_surface_area(const Mesh& mesh) {
  double area = 0.0;
  for (const Face& f : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    const Vec3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const Vec3 v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
    const Vec3 n{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    area += 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  }
  return area;
}

std::pair<Vec3, Vec3> mesh_bounds(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw Error("empty-mesh", "bounds of an empty mesh");
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const Vec3& v : mesh.vertices)
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::min(lo[i], v[i]);
      hi[i] = std::max(hi[i], v[i]);
    }
  return {lo, hi};
}

CategoryTable::CategoryTable(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.size() < 2) throw Error("bad-categories", "category table needs void plus one class");
  std::set<std::string> seen;
  for (const auto& n : names_)
    if (!seen.insert(n).second) throw Error("bad-categories", "duplicate category " + n);
}

std::optional<std::size_t> CategoryTable::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

void validate_object(const ObjectInstance& obj, std::size_t category_count) {
  for (double s : obj.size)
    if (!(s > 0.0)) throw Error("invalid-object", "nonpositive size");
  if (obj.label < 0 || static_cast<std::size_t>(obj.label) >= category_count)
    throw Error("unknown-category", "label " + std::to_string(obj.label) + " outside table of " +
                                        std::to_string(category_count));
  if (obj.center[1] - obj.size[1] / 2 < -1e-9) throw Error("invalid-object", "box below the floor");
  for (double c : obj.center)
    if (!std::isfinite(c)) throw Error("invalid-object", "non-finite center");
}

void validate_scene(const Scene& scene, std::size_t max_objects) {
  if (max_objects > 0 && scene.objects.size() > max_objects)
    throw Error("invalid-scene", "scene has " + std::to_string(scene.objects.size()) +
                                     " objects, maximum is " + std::to_string(max_objects));
  for (const auto& obj : scene.objects) validate_object(obj, scene.categories.size());
}

json scene_to_json(const Scene& scene) {
  json objects = json::array();
  for (const auto& obj : scene.objects) {
    json o{{"label", obj.label}, {"center", obj.center}, {"size", obj.size}};
    if (!obj.mesh.vertices.empty())
      o["mesh"] = json{{"vertices", obj.mesh.vertices}, {"faces", obj.mesh.faces}};
    objects.push_back(std::move(o));
  }
  return json{{"categories", scene.categories.names()}, {"objects", std::move(objects)}};
}

Scene scene_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("categories") || !j.contains("objects"))
    throw Error("malformed-scene", "scene JSON needs \"categories\" and \"objects\"");
  Scene scene;
  try {
    scene.categories = CategoryTable(j.at("categories").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw Error("malformed-scene", std::string("categories: ") + e.what());
  }
  for (const auto& o : j.at("objects")) {
    ObjectInstance obj;
    if (!o.contains("label") || !o["label"].is_number_integer())
      throw Error("malformed-scene", "object label must be an integer");
    obj.label = o["label"].get<int>();
    obj.center = vec3_from_json(o.value("center", json()), "center");
    obj.size = vec3_from_json(o.value("size", json()), "size");
    if (o.contains("mesh")) {
      const auto& m = o["mesh"];
      if (m.is_string()) {
        obj.mesh = read_obj(base_dir / m.get<std::string>());
      } else {
        try {
          obj.mesh.vertices = m.at("vertices").get<std::vector<Vec3>>();
          obj.mesh.faces = m.at("faces").get<std::vector<Face>>();
        } catch (const json::exception& e) {
          throw Error("malformed-scene", std::string("mesh: ") + e.what());
        }
        for (const Face& f : obj.mesh.faces)
          for (int idx : f)
            if (idx < 0 || static_cast<std::size_t>(idx) >= obj.mesh.vertices.size())
              throw Error("malformed-scene", "mesh face index out of range");
      }
    }
    validate_object(obj, scene.categories.size());
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("io", "cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw Error("malformed-json", path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot open " + path.string() + " for writing");
  f << text;
}

void write_scene(const std::filesystem::path& path, const Scene& scene) {
  write_text_file(path, dump_json(scene_to_json(scene)));
}

Scene read_scene(const std::filesystem::path& path) {
  return scene_from_json(read_json_file(path), path.parent_path());
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh) {
  std::ostringstream os;
  os.precision(17);
  for (const Vec3& v : mesh.vertices) os << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const Face& f : mesh.faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  write_text_file(path, os.str());
}

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("io", "cannot open " + path.string());
  Mesh mesh;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string tag;
    if (!(is >> tag)) continue;
    if (tag == "v") {
      Vec3 v{};
      if (!(is >> v[0] >> v[1] >> v[2])) throw Error("malformed-obj", "bad vertex line: " + line);
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      Face face{};
      for (int& idx : face) {
        std::string tok;
        if (!(is >> tok)) throw Error("malformed-obj", "face needs 3 indices: " + line);
        idx = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.faces.push_back(face);
    }
  }
  for (const Face& face : mesh.faces)
    for (int idx : face)
      if (idx < 0 || static_cast<std::size_t>(idx) >= mesh.vertices.size())
        throw Error("malformed-obj", "face index out of range in " + path.string());
  return mesh;
}

}  // namespace sceneprior
