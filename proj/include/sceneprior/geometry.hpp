#pragma once

// Pinhole cameras, projection to normalized image coordinates, 2D boxes and
// the frustum-loss ray construction.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "sceneprior/autodiff.hpp"
#include "sceneprior/scene.hpp"

namespace sceneprior {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kMinBoxExtent = 1e-4;

// World-to-camera rigid transform plus intrinsics. Camera frame: x right,
// y down, looking down +z.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  std::array<double, 9> R{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  Vec3 t{0, 0, 0};

  Vec3 to_camera(const Vec3& p) const;
  Vec3 to_world(const Vec3& p_cam) const;
  Vec3 center() const;  // -R^T t
  void validate() const;
};

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_radians,
               int width, int height);

nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);

struct Box2D {
  double x1 = 0, y1 = 0, x2 = 1, y2 = 1;

  std::array<double, 4> as_array() const { return {x1, y1, x2, y2}; }
  Vec3 center_uv() const { return {(x1 + x2) / 2, (y1 + y2) / 2, 0.0}; }
  void validate() const;
};

// Mean absolute coordinate difference, in [0, 1].
double box_l1(const Box2D& a, const Box2D& b);

struct Projection {
  std::vector<std::array<double, 2>> uv;  // normalized image coordinates
  std::vector<double> depth;              // camera-frame Z
  std::vector<bool> valid;                // Z > near plane
  std::size_t valid_count = 0;
};

Projection project(std::span<const Vec3> points, const Camera& cam);
// Recovers a world point from normalized coordinates and camera-frame depth.
Vec3 unproject(double u, double v, double depth, const Camera& cam);

// Throws Error("no-visible-points") when nothing lies in front of the camera.
Box2D box_from_projection(const Projection& proj);
bool in_frustum(const Vec3& point, const Camera& cam);

struct RayPair {
  Vec3 predicted;     // c_pred - camera center
  Vec3 ground_truth;  // unprojected gt box center (Z_cam = 1) - camera center
};
RayPair frustum_ray_pair(const Vec3& predicted_center, const Box2D& gt_box, const Camera& cam);
double frustum_term(const Vec3& predicted_center, const Box2D& gt_box, const Camera& cam);

// ---- differentiable counterparts ------------------------------------------

struct ProjectedPoints {
  ad::Var uv;  // n x 2
  std::vector<double> depth;
  std::vector<bool> valid;
  std::size_t valid_count = 0;
};

// points: n x 3 world coordinates.
ProjectedPoints project(ad::Var points, const Camera& cam);
// 1 x 4 box (x1, y1, x2, y2); nullopt when no point is valid, which is the
// caller's cue to use the frustum term instead.
std::optional<ad::Var> box_from_projection(const ProjectedPoints& proj);
// 1 - cos(ray_pred, ray_gt) for a 1 x 3 center.
ad::Var frustum_term(ad::Var center, const Box2D& gt_box, const Camera& cam);

}  // namespace sceneprior
