#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sceneprior/renderer.hpp"
#include "sceneprior/shapes.hpp"

using namespace sceneprior;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

RasterConfig coarse(int k = 8) { return {10, 10, k, 0.01, 0.01}; }

// Right triangle with legs along u = 0.2 and v = 0.2, hypotenuse u + v = 1.
const std::vector<std::array<double, 2>> kTri{{0.2, 0.2}, {0.8, 0.2}, {0.2, 0.8}};
const std::vector<Face> kFace{{0, 1, 2}};

}  // namespace

TEST_CASE("soft occupancy of one triangle by hand") {
  const std::vector<double> depth{1, 1, 1};
  SilhouetteMap m = rasterize_screen(kTri, depth, {true, true, true}, kFace, coarse());
  auto at = [&](int r, int c) { return m.values[r * 10 + c]; };
  // (0.35, 0.35): inside, nearest edges 0.15 away.
  CHECK(at(3, 3) == doctest::Approx(sig(0.0225 / 0.01)).epsilon(1e-14));
  // (0.35, 0.15): outside, 0.05 from the bottom edge, within the blur radius.
  CHECK(at(1, 3) == doctest::Approx(sig(-0.0025 / 0.01)).epsilon(1e-14));
  // (0.35, 0.05): 0.15 away, beyond the blur radius.
  CHECK(at(0, 3) == 0.0);
  // (0.05, 0.05): nearest point is the vertex (0.2, 0.2).
  CHECK(at(0, 0) == 0.0);
  // (0.15, 0.15): vertex distance^2 = 0.005.
  CHECK(at(1, 1) == doctest::Approx(sig(-0.005 / 0.01)).epsilon(1e-14));
}

TEST_CASE("overlapping faces combine as a probabilistic union and top-K keeps the nearest") {
  std::vector<std::array<double, 2>> uv = kTri;
  uv.insert(uv.end(), kTri.begin(), kTri.end());
  const std::vector<Face> faces{{0, 1, 2}, {3, 4, 5}};
  const std::vector<bool> valid(6, true);
  const double s = sig(2.25);
  const std::vector<double> depth{1, 1, 1, 2, 2, 2};
  SilhouetteMap both = rasterize_screen(uv, depth, valid, faces, coarse(8));
  CHECK(both.values[33] == doctest::Approx(1 - (1 - s) * (1 - s)).epsilon(1e-14));
  SilhouetteMap one = rasterize_screen(uv, depth, valid, faces, coarse(1));
  CHECK(one.values[33] == doctest::Approx(s).epsilon(1e-14));
}

TEST_CASE("invalid vertices and degenerate faces drop out") {
  const std::vector<double> depth{1, 1, 1};
  SilhouetteMap m = rasterize_screen(kTri, depth, {true, false, true}, kFace, coarse());
  for (double v : m.values) CHECK(v == 0.0);
  const std::vector<std::array<double, 2>> flat{{0.2, 0.2}, {0.5, 0.5}, {0.8, 0.8}};
  SilhouetteMap d = rasterize_screen(flat, depth, {true, true, true}, kFace, coarse());
  CHECK(d.degenerate_faces == 1);
}

TEST_CASE("taped silhouette equals the plain one") {
  const Camera cam = look_at({0.5, 1.0, 3.0}, {0, 0, 0}, {0, 1, 0}, 0.9, 24, 24);
  const Mesh m = make_icosphere(1).mesh;
  const RasterConfig cfg{24, 24, 8, 1e-4, 1e-4};
  SilhouetteMap plain = rasterize_silhouette(m, cam, cfg);
  std::vector<double> flat;
  for (const Vec3& v : m.vertices) flat.insert(flat.end(), v.begin(), v.end());
  ad::Tape t;
  SoftSilhouette soft = rasterize_silhouette(project(t.constant(m.vertices.size(), 3, flat), cam),
                                             m.faces, cfg);
  const auto taped = soft.occupancy.to_vector();
  REQUIRE(taped.size() == plain.values.size());
  for (std::size_t i = 0; i < taped.size(); ++i) CHECK(std::abs(taped[i] - plain.values[i]) < 1e-12);
}

TEST_CASE("hard id render resolves occlusion by depth") {
  const Camera cam = look_at({0, 0, 5}, {0, 0, 0}, {0, 1, 0}, 0.8, 32, 32);
  const Mesh box = make_box_mesh();
  const Mesh near = to_world(box, {0.3, 0.3, 0.3}, {0, 0, 1});
  const Mesh far = to_world(box, {1.0, 1.0, 0.3}, {0, 0, -1});
  const RasterConfig cfg{32, 32, 8, 1e-4, 1e-4};
  InstanceIdMap ids = rasterize_instance_ids({far, near}, cam, cfg);
  CHECK(ids.ids[16 * 32 + 16] == 1);
  CHECK(ids.ids[0] == InstanceIdMap::kBackground);
  const Mask m0 = ids.mask_of(0), m1 = ids.mask_of(1);
  CHECK(m1.count() > 0);
  CHECK(m0.count() > m1.count());
  for (std::size_t i = 0; i < m0.data.size(); ++i) CHECK_FALSE((m0.data[i] && m1.data[i]));
}

TEST_CASE("mask iou by hand") {
  Mask a{2, 2, {1, 1, 0, 0}}, b{2, 2, {0, 1, 1, 0}}, e{2, 2, {0, 0, 0, 0}};
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(e, e) == 0.0);
  CHECK_THROWS_AS(mask_iou(a, Mask{1, 4, {0, 0, 0, 0}}), Error);
  CHECK(threshold(std::vector<double>{0.2, 0.5, 0.51, 0.9}, 2, 2).data ==
        std::vector<std::uint8_t>{0, 0, 1, 1});
}

TEST_CASE("pgm round trip") {
  const auto path = std::filesystem::temp_directory_path() / "sceneprior_unit_mask.pgm";
  Mask m{3, 2, {1, 0, 1, 0, 0, 1}};
  write_pgm(path, m);
  Mask r = read_pgm(path);
  CHECK(r.width == 3);
  CHECK(r.height == 2);
  CHECK(r.data == m.data);
}

TEST_CASE("raster config validation") {
  RasterConfig c;
  c.faces_per_pixel = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = RasterConfig{};
  c.blend_sigma = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}
