#include <doctest.h>

#include <cmath>

#include "sceneprior/geometry.hpp"

using namespace sceneprior;

namespace {

// Identity rotation, camera at z = -5 looking down +z.
Camera simple_camera() {
  Camera c;
  c.fx = c.fy = 100;
  c.cx = c.cy = 50;
  c.width = c.height = 100;
  c.t = {0, 0, 5};
  return c;
}

}  // namespace

TEST_CASE("pinhole projection by hand") {
  const Camera c = simple_camera();
  const std::vector<Vec3> pts{{1, 2, 0}, {0, 0, -5}, {0, 0, -6}};
  Projection p = project(pts, c);
  CHECK(p.uv[0][0] == doctest::Approx(0.7));
  CHECK(p.uv[0][1] == doctest::Approx(0.9));
  CHECK(p.depth[0] == 5.0);
  CHECK_FALSE(p.valid[1]);
  CHECK_FALSE(p.valid[2]);
  CHECK(p.valid_count == 1);
}

TEST_CASE("unproject inverts project") {
  const Camera c = look_at({3, 2, 4}, {0, 0.5, 0}, {0, 1, 0}, 0.9, 80, 60);
  const Vec3 x{0.3, -0.2, 0.5};
  Projection p = project(std::vector<Vec3>{x}, c);
  const Vec3 back = unproject(p.uv[0][0], p.uv[0][1], p.depth[0], c);
  for (int a = 0; a < 3; ++a) CHECK(back[a] == doctest::Approx(x[a]).epsilon(1e-12));
}

TEST_CASE("look_at centers the target and places the camera at the eye") {
  const Vec3 eye{4, 3, -2};
  const Camera c = look_at(eye, {0, 0, 0}, {0, 1, 0}, 0.8, 64, 48);
  CHECK_NOTHROW(c.validate());
  Projection p = project(std::vector<Vec3>{{0, 0, 0}}, c);
  CHECK(p.uv[0][0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.uv[0][1] == doctest::Approx(0.5).epsilon(1e-12));
  for (int a = 0; a < 3; ++a) CHECK(c.center()[a] == doctest::Approx(eye[a]).epsilon(1e-12));
  // Up in the world is up in the image: smaller v.
  Projection q = project(std::vector<Vec3>{{0, 0.5, 0}}, c);
  CHECK(q.uv[0][1] < 0.5);
}

TEST_CASE("camera json round trip and validation") {
  const Camera c = look_at({1, 2, 3}, {0, 0, 0}, {0, 1, 0}, 1.0, 32, 32);
  const Camera r = camera_from_json(camera_to_json(c));
  CHECK(r.R == c.R);
  CHECK(r.t == c.t);
  CHECK(r.fx == c.fx);
  Camera bad = c;
  bad.R[0] = 2.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("box from projection ignores points behind the camera") {
  const Camera c = simple_camera();
  Projection p = project(std::vector<Vec3>{{-1, -1, 0}, {1, 0.5, 0}, {0, 0, -10}}, c);
  Box2D b = box_from_projection(p);
  CHECK(b.x1 == doctest::Approx(0.3));
  CHECK(b.y1 == doctest::Approx(0.3));
  CHECK(b.x2 == doctest::Approx(0.7));
  CHECK(b.y2 == doctest::Approx(0.6));
  Projection none = project(std::vector<Vec3>{{0, 0, -10}}, c);
  try {
    box_from_projection(none);
    FAIL("expected no-visible-points");
  } catch (const Error& e) {
    CHECK(e.code() == "no-visible-points");
  }
}

TEST_CASE("box l1 and validation") {
  CHECK(box_l1({0.1, 0.2, 0.5, 0.6}, {0.2, 0.2, 0.3, 0.6}) == doctest::Approx(0.075));
  CHECK_THROWS_AS((Box2D{0.5, 0.1, 0.4, 0.6}.validate()), Error);
}

TEST_CASE("frustum term is zero on the gt ray and one across it") {
  const Camera c = simple_camera();
  const Box2D gt{0.6, 0.6, 0.8, 0.8};  // center (0.7, 0.7) -> direction (0.2, 0.2, 1)
  CHECK(frustum_term(Vec3{0.4, 0.4, -3}, gt, c) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(frustum_term(Vec3{1, 0, -5.2}, gt, c) - 1.0) < 1e-12);
  CHECK(frustum_term(Vec3{-0.2, -0.2, -6}, gt, c) == doctest::Approx(2.0));
}

TEST_CASE("in_frustum") {
  const Camera c = simple_camera();
  CHECK(in_frustum({0, 0, 0}, c));
  CHECK_FALSE(in_frustum({10, 0, 0}, c));
  CHECK_FALSE(in_frustum({0, 0, -5.5}, c));
}

TEST_CASE("differentiable projection and box match the plain ones") {
  const Camera c = look_at({2, 1.5, 3}, {0, 0, 0}, {0, 1, 0}, 0.9, 40, 40);
  const std::vector<Vec3> pts{{0.1, 0.2, 0.3}, {-0.4, 0.1, 0.2}, {0.3, -0.3, -0.1}};
  std::vector<double> flat;
  for (const Vec3& p : pts) flat.insert(flat.end(), p.begin(), p.end());
  ad::Tape t;
  ProjectedPoints dp = project(t.constant(3, 3, flat), c);
  Projection p = project(pts, c);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(dp.uv.at(i, 0) == doctest::Approx(p.uv[i][0]).epsilon(1e-14));
    CHECK(dp.uv.at(i, 1) == doctest::Approx(p.uv[i][1]).epsilon(1e-14));
  }
  auto db = box_from_projection(dp);
  REQUIRE(db.has_value());
  const auto ref = box_from_projection(p).as_array();
  for (std::size_t k = 0; k < 4; ++k) CHECK(db->value()[k] == doctest::Approx(ref[k]).epsilon(1e-14));
  const Box2D gt{0.4, 0.4, 0.6, 0.7};
  CHECK(frustum_term(t.constant(1, 3, {0.3, 0.2, -0.1}), gt, c).item() ==
        doctest::Approx(frustum_term(Vec3{0.3, 0.2, -0.1}, gt, c)).epsilon(1e-12));
}
