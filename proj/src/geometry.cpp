#include "sceneprior/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sceneprior {

using nlohmann::json;

namespace {

Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 unit3(const Vec3& a) {
  const double n = std::sqrt(dot3(a, a));
  if (n == 0.0) throw Error("degenerate", "zero-length direction");
  return {a[0] / n, a[1] / n, a[2] / n};
}

// Clamped min/max bounds with the degenerate-extent widening rule. Returns
// the box and, per coordinate, the weights on the argmin/argmax sources.
struct BoxBuild {
  std::array<double, 4> box{};
  // d box[k] / d raw[k] and d box[k] / d raw[partner]; raw = (min u, min v,
  // max u, max v).
  std::array<double, 4> self_w{};
  std::array<double, 4> partner_w{};
};

BoxBuild build_box(double umin, double vmin, double umax, double vmax) {
  BoxBuild b;
  const std::array<double, 4> raw{umin, vmin, umax, vmax};
  for (int axis = 0; axis < 2; ++axis) {
    const int lo = axis, hi = axis + 2;
    double a = std::clamp(raw[lo], 0.0, 1.0);
    double c = std::clamp(raw[hi], 0.0, 1.0);
    double wa = (raw[lo] > 0.0 && raw[lo] < 1.0) ? 1.0 : 0.0;
    double wc = (raw[hi] > 0.0 && raw[hi] < 1.0) ? 1.0 : 0.0;
    b.self_w[lo] = wa;
    b.self_w[hi] = wc;
    b.partner_w[lo] = 0.0;
    b.partner_w[hi] = 0.0;
    if (c - a < kMinBoxExtent) {
      double mid = (a + c) / 2;
      mid = std::clamp(mid, kMinBoxExtent / 2, 1.0 - kMinBoxExtent / 2);
      a = mid - kMinBoxExtent / 2;
      c = mid + kMinBoxExtent / 2;
      // Both ends now follow the midpoint of the clamped extremes.
      b.self_w[lo] = b.partner_w[hi] = 0.5 * wa;
      b.self_w[hi] = b.partner_w[lo] = 0.5 * wc;
    }
    b.box[lo] = a;
    b.box[hi] = c;
  }
  return b;
}

}  // namespace

// ---- Camera ----------------------------------------------------------------

Vec3 Camera::to_camera(const Vec3& p) const {
  return {R[0] * p[0] + R[1] * p[1] + R[2] * p[2] + t[0],
          R[3] * p[0] + R[4] * p[1] + R[5] * p[2] + t[1],
          R[6] * p[0] + R[7] * p[1] + R[8] * p[2] + t[2]};
}

Vec3 Camera::to_world(const Vec3& pc) const {
  const Vec3 d = sub3(pc, t);
  return {R[0] * d[0] + R[3] * d[1] + R[6] * d[2], R[1] * d[0] + R[4] * d[1] + R[7] * d[2],
          R[2] * d[0] + R[5] * d[1] + R[8] * d[2]};
}

Vec3 Camera::center() const { return to_world({0.0, 0.0, 0.0}); }

void Camera::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw Error("invalid-camera", "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error("invalid-camera", "image size must be positive");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double d = 0.0;
      for (int k = 0; k < 3; ++k) d += R[i * 3 + k] * R[j * 3 + k];
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-9)
        throw Error("invalid-camera", "rotation is not orthonormal");
    }
  const double det = R[0] * (R[4] * R[8] - R[5] * R[7]) - R[1] * (R[3] * R[8] - R[5] * R[6]) +
                     R[2] * (R[3] * R[7] - R[4] * R[6]);
  if (det < 0.0) throw Error("invalid-camera", "rotation has negative determinant");
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_radians,
               int width, int height) {
  const Vec3 forward = unit3(sub3(target, eye));
  const Vec3 right = unit3(cross3(forward, up));
  const Vec3 down = cross3(forward, right);
  Camera cam;
  cam.R = {right[0], right[1], right[2], down[0], down[1], down[2],
           forward[0], forward[1], forward[2]};
  cam.t = {-dot3(right, eye), -dot3(down, eye), -dot3(forward, eye)};
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(fov_y_radians / 2);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

json camera_to_json(const Camera& cam) {
  return json{{"fx", cam.fx},         {"fy", cam.fy},         {"cx", cam.cx}, {"cy", cam.cy},
              {"width", cam.width},   {"height", cam.height}, {"R", cam.R},   {"t", cam.t}};
}

Camera camera_from_json(const json& j) {
  Camera cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.R = j.at("R").get<std::array<double, 9>>();
    cam.t = j.at("t").get<Vec3>();
  } catch (const json::exception& e) {
    throw Error("malformed-camera", e.what());
  }
  cam.validate();
  return cam;
}

// ---- boxes -------------------------------------------------------------------

void Box2D::validate() const {
  if (!(0.0 <= x1 && x1 < x2 && x2 <= 1.0 && 0.0 <= y1 && y1 < y2 && y2 <= 1.0))
    throw Error("invalid-box", "box must satisfy 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1");
}

double box_l1(const Box2D& a, const Box2D& b) {
  return (std::abs(a.x1 - b.x1) + std::abs(a.y1 - b.y1) + std::abs(a.x2 - b.x2) +
          std::abs(a.y2 - b.y2)) /
         4.0;
}

Projection project(std::span<const Vec3> points, const Camera& cam) {
  Projection out;
  out.uv.resize(points.size());
  out.depth.resize(points.size());
  out.valid.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 pc = cam.to_camera(points[i]);
    out.depth[i] = pc[2];
    if (pc[2] <= kNearPlane) {
      out.uv[i] = {0.0, 0.0};
      out.valid[i] = false;
      continue;
    }
    out.uv[i] = {(cam.fx * pc[0] / pc[2] + cam.cx) / cam.width,
                 (cam.fy * pc[1] / pc[2] + cam.cy) / cam.height};
    out.valid[i] = true;
    ++out.valid_count;
  }
  return out;
}

Vec3 unproject(double u, double v, double depth, const Camera& cam) {
  const double x = (u * cam.width - cam.cx) / cam.fx * depth;
  const double y = (v * cam.height - cam.cy) / cam.fy * depth;
  return cam.to_world({x, y, depth});
}

Box2D box_from_projection(const Projection& proj) {
  if (proj.valid_count == 0)
    throw Error("no-visible-points", "no projected point lies in front of the camera");
  double umin = std::numeric_limits<double>::infinity(), vmin = umin;
  double umax = -umin, vmax = -umin;
  for (std::size_t i = 0; i < proj.uv.size(); ++i) {
    if (!proj.valid[i]) continue;
    umin = std::min(umin, proj.uv[i][0]);
    vmin = std::min(vmin, proj.uv[i][1]);
    umax = std::max(umax, proj.uv[i][0]);
    vmax = std::max(vmax, proj.uv[i][1]);
  }
  const auto b = build_box(umin, vmin, umax, vmax).box;
  return {b[0], b[1], b[2], b[3]};
}

bool in_frustum(const Vec3& point, const Camera& cam) {
  const Vec3 pc = cam.to_camera(point);
  if (pc[2] <= kNearPlane) return false;
  const double u = (cam.fx * pc[0] / pc[2] + cam.cx) / cam.width;
  const double v = (cam.fy * pc[1] / pc[2] + cam.cy) / cam.height;
  return u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0;
}

RayPair frustum_ray_pair(const Vec3& predicted_center, const Box2D& gt_box, const Camera& cam) {
  const Vec3 origin = cam.center();
  const Vec3 c = gt_box.center_uv();
  const Vec3 target = unproject(c[0], c[1], 1.0, cam);
  return {sub3(predicted_center, origin), sub3(target, origin)};
}

double frustum_term(const Vec3& predicted_center, const Box2D& gt_box, const Camera& cam) {
  const RayPair rays = frustum_ray_pair(predicted_center, gt_box, cam);
  const double cosv = dot3(rays.predicted, rays.ground_truth) /
                      std::sqrt(dot3(rays.predicted, rays.predicted) *
                                dot3(rays.ground_truth, rays.ground_truth));
  return 1.0 - cosv;
}

// ---- differentiable ------------------------------------------------------------

ProjectedPoints project(ad::Var points, const Camera& cam) {
  if (points.cols() != 3) throw Error("shape-mismatch", "project expects n x 3 points");
  const std::size_t n = points.rows();
  auto pv = points.value();
  ProjectedPoints out;
  out.depth.resize(n);
  out.valid.resize(n);
  std::vector<double> uv(n * 2, 0.0);
  // Per point: d(u,v)/d(world xyz), 6 entries.
  std::vector<double> jac(n * 6, 0.0);
  const double ax = cam.fx / cam.width, ay = cam.fy / cam.height;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 pc = cam.to_camera({pv[i * 3], pv[i * 3 + 1], pv[i * 3 + 2]});
    out.depth[i] = pc[2];
    if (pc[2] <= kNearPlane) continue;
    out.valid[i] = true;
    ++out.valid_count;
    const double iz = 1.0 / pc[2];
    uv[i * 2] = ax * pc[0] * iz + cam.cx / cam.width;
    uv[i * 2 + 1] = ay * pc[1] * iz + cam.cy / cam.height;
    for (int j = 0; j < 3; ++j) {
      jac[i * 6 + j] = ax * (cam.R[j] * iz - pc[0] * cam.R[6 + j] * iz * iz);
      jac[i * 6 + 3 + j] = ay * (cam.R[3 + j] * iz - pc[1] * cam.R[6 + j] * iz * iz);
    }
  }
  const std::size_t ip = points.id();
  out.uv = points.tape().push(n, 2, std::move(uv), {points},
                              [ip, n, jac = std::move(jac)](ad::Tape& t, std::size_t self) {
                                auto g = t.grad(self);
                                auto gp = t.grad_accum(ip);
                                for (std::size_t i = 0; i < n; ++i)
                                  for (int j = 0; j < 3; ++j)
                                    gp[i * 3 + j] += g[i * 2] * jac[i * 6 + j] +
                                                     g[i * 2 + 1] * jac[i * 6 + 3 + j];
                              });
  return out;
}

std::optional<ad::Var> box_from_projection(const ProjectedPoints& proj) {
  if (proj.valid_count == 0) return std::nullopt;
  auto uv = proj.uv.value();
  const std::size_t n = proj.uv.rows();
  // Source vertex index for min u, min v, max u, max v (first on ties).
  std::array<std::size_t, 4> src{n, n, n, n};
  std::array<double, 4> raw{};
  for (std::size_t i = 0; i < n; ++i) {
    if (!proj.valid[i]) continue;
    const double u = uv[i * 2], v = uv[i * 2 + 1];
    if (src[0] == n || u < raw[0]) raw[0] = u, src[0] = i;
    if (src[1] == n || v < raw[1]) raw[1] = v, src[1] = i;
    if (src[2] == n || u > raw[2]) raw[2] = u, src[2] = i;
    if (src[3] == n || v > raw[3]) raw[3] = v, src[3] = i;
  }
  const BoxBuild b = build_box(raw[0], raw[1], raw[2], raw[3]);
  const std::size_t iu = proj.uv.id();
  return proj.uv.tape().push(
      1, 4, std::vector<double>(b.box.begin(), b.box.end()), {proj.uv},
      [iu, src, b](ad::Tape& t, std::size_t self) {
        auto g = t.grad(self);
        auto gu = t.grad_accum(iu);
        for (int k = 0; k < 4; ++k) {
          const int coord = k % 2;  // 0 -> u, 1 -> v
          const int partner = (k + 2) % 4;
          gu[src[k] * 2 + coord] += g[k] * b.self_w[k];
          gu[src[partner] * 2 + coord] += g[k] * b.partner_w[k];
        }
      });
}

ad::Var frustum_term(ad::Var center, const Box2D& gt_box, const Camera& cam) {
  if (center.size() != 3) throw Error("shape-mismatch", "frustum term expects a 1 x 3 center");
  ad::Tape& tape = center.tape();
  const Vec3 origin = cam.center();
  const Vec3 c = gt_box.center_uv();
  const Vec3 gt_ray = sub3(unproject(c[0], c[1], 1.0, cam), origin);
  ad::Var ray_pred = ad::sub(center, tape.constant(1, 3, {origin[0], origin[1], origin[2]}));
  ad::Var ray_gt = tape.constant(1, 3, {gt_ray[0], gt_ray[1], gt_ray[2]});
  return ad::add_scalar(ad::neg(ad::cosine_similarity(ray_pred, ray_gt)), 1.0);
}

}  // namespace sceneprior
