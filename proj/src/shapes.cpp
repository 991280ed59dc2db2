#include "sceneprior/shapes.hpp"

#include <cmath>

namespace sceneprior {

namespace {

// Prism over a polygon in the (z, y) plane, extruded along x in [-1, 1].
// `caps` triangulates the polygon by index.
Mesh extrude_profile(const std::vector<std::array<double, 2>>& profile,
                     const std::vector<Face>& caps) {
  Mesh m;
  const int n = static_cast<int>(profile.size());
  for (double x : {-1.0, 1.0})
    for (const auto& p : profile) m.vertices.push_back({x, p[1], p[0]});
  for (const Face& f : caps) {
    m.faces.push_back(f);
    m.faces.push_back({f[0] + n, f[2] + n, f[1] + n});
  }
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.faces.push_back({i, j + n, j});
    m.faces.push_back({i, i + n, j + n});
  }
  return m;
}

// Flips faces whose normal points toward the mesh centroid. Only used for
// convex meshes.
void orient_outward(Mesh& m) {
  Vec3 c{0, 0, 0};
  for (const Vec3& v : m.vertices)
    for (int i = 0; i < 3; ++i) c[i] += v[i] / static_cast<double>(m.vertices.size());
  for (Face& f : m.faces) {
    const Vec3& a = m.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = m.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& d = m.vertices[static_cast<std::size_t>(f[2])];
    const Vec3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const Vec3 w{d[0] - a[0], d[1] - a[1], d[2] - a[2]};
    const Vec3 nrm{u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]};
    double dot = 0.0;
    for (int i = 0; i < 3; ++i) dot += nrm[i] * ((a[i] + b[i] + d[i]) / 3 - c[i]);
    if (dot < 0) std::swap(f[1], f[2]);
  }
}

Mesh frustum_box(double top) {
  Mesh m;
  for (double y : {-1.0, 1.0}) {
    const double s = y < 0 ? 1.0 : top;
    m.vertices.push_back({-s, y, -s});
    m.vertices.push_back({s, y, -s});
    m.vertices.push_back({s, y, s});
    m.vertices.push_back({-s, y, s});
  }
  m.faces = {{0, 1, 2}, {0, 2, 3}, {4, 6, 5}, {4, 7, 6}, {0, 4, 5}, {0, 5, 1},
             {1, 5, 6}, {1, 6, 2}, {2, 6, 7}, {2, 7, 3}, {3, 7, 4}, {3, 4, 0}};
  orient_outward(m);
  return m;
}

}  // namespace

Mesh make_box_mesh() { return frustum_box(1.0); }

Mesh make_tapered_box(double top_scale) {
  if (!(top_scale > 0.0 && top_scale <= 1.0))
    throw Error("bad-config", "taper must be in (0, 1]");
  return frustum_box(top_scale);
}

Mesh make_ellipsoid(int subdivisions) { return fit_unit_box(make_icosphere(subdivisions).mesh); }

Mesh make_l_shape(double seat, double back) {
  if (!(seat > 0.0 && seat < 2.0) || !(back > 0.0 && back < 2.0))
    throw Error("bad-config", "l-shape seat and back must be in (0, 2)");
  const double ys = -1.0 + seat, zb = -1.0 + back;
  // A B C D E F G, with G splitting the left edge so both caps share it.
  const std::vector<std::array<double, 2>> profile{{-1, -1}, {1, -1}, {1, ys}, {zb, ys},
                                                   {zb, 1},  {-1, 1}, {-1, ys}};
  const std::vector<Face> caps{{0, 1, 2}, {0, 2, 3}, {0, 3, 6}, {6, 3, 4}, {6, 4, 5}};
  return extrude_profile(profile, caps);
}

Mesh fit_unit_box(const Mesh& mesh) {
  const auto [lo, hi] = mesh_bounds(mesh);
  Mesh out = mesh;
  for (Vec3& v : out.vertices)
    for (int i = 0; i < 3; ++i) {
      const double half = (hi[i] - lo[i]) / 2;
      if (!(half > 0.0)) throw Error("degenerate-mesh", "mesh is flat along an axis");
      v[i] = (v[i] - (lo[i] + hi[i]) / 2) / half;
    }
  return out;
}

Mesh rotate_yaw(const Mesh& mesh, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  Mesh out = mesh;
  for (Vec3& v : out.vertices) {
    for (int i = 0; i < q; ++i) v = {v[2], v[1], -v[0]};
  }
  return out;
}

std::vector<const LibraryEntry*> RetrievalLibrary::shelf(int label) const {
  std::vector<const LibraryEntry*> out;
  for (const auto& e : entries)
    if (e.label == label) out.push_back(&e);
  return out;
}

RetrievalLibrary default_library(const CategoryTable& categories) {
  RetrievalLibrary lib;
  auto add = [&](const std::string& cat, const std::string& name, Mesh mesh) {
    const auto label = categories.find(cat);
    if (!label) return;
    lib.entries.push_back({cat + "/" + name, static_cast<int>(*label), std::move(mesh)});
  };
  add("bed", "box", make_box_mesh());
  add("bed", "headboard", make_l_shape(0.8, 0.3));
  add("table", "tapered", make_tapered_box(0.7));
  add("table", "box", make_box_mesh());
  add("chair", "l_thin", make_l_shape(1.0, 0.4));
  add("chair", "l_thick", make_l_shape(0.9, 0.7));
  add("cabinet", "box", make_box_mesh());
  add("cabinet", "tapered", make_tapered_box(0.85));
  add("lamp", "ellipsoid", make_ellipsoid(2));
  add("lamp", "cone", make_tapered_box(0.3));
  for (std::size_t c = 1; c < categories.size(); ++c)
    if (lib.shelf(static_cast<int>(c)).empty()) {
      add(categories.name(c), "box", make_box_mesh());
      add(categories.name(c), "ellipsoid", make_ellipsoid(2));
    }
  return lib;
}

}  // namespace sceneprior
