#pragma once

// Soft silhouette rasterization (differentiable in projected vertex
// positions) and hard instance-ID rendering.
//
// Occupancy of pixel q is 1 - prod_i (1 - sigmoid(delta_i(q) / blend_sigma))
// over the faces_per_pixel nearest faces (by mean vertex depth) that cover q
// or lie within blur_radius squared distance of it. delta_i is the squared
// distance from q to the screen triangle's boundary, positive inside.
// Distances are measured in normalized image coordinates.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sceneprior/autodiff.hpp"
#include "sceneprior/geometry.hpp"
#include "sceneprior/scene.hpp"

namespace sceneprior {

struct RasterConfig {
  int width = 64;
  int height = 64;
  int faces_per_pixel = 8;
  double blur_radius = 1e-4;
  double blend_sigma = 1e-4;

  void validate() const;
  static RasterConfig full_scale(int width, int height) { return {width, height, 50, 1e-4, 1e-4}; }
};

struct SilhouetteMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, height x width
  std::size_t degenerate_faces = 0;
};

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 0 / 1, row-major

  std::size_t count() const;
};

struct InstanceIdMap {
  static constexpr int kBackground = -1;
  int width = 0;
  int height = 0;
  std::vector<int> ids;

  Mask mask_of(int id) const;
};

// uv: normalized coordinates per vertex; vertices with valid == false
// disqualify every face that uses them.
SilhouetteMap rasterize_screen(std::span<const std::array<double, 2>> uv,
                               std::span<const double> depth, const std::vector<bool>& valid,
                               std::span<const Face> faces, const RasterConfig& config);
SilhouetteMap rasterize_silhouette(const Mesh& world, const Camera& cam, const RasterConfig& config);

struct SoftSilhouette {
  ad::Var occupancy;  // height x width
  std::size_t degenerate_faces = 0;
};
SoftSilhouette rasterize_silhouette(const ProjectedPoints& projected, std::span<const Face> faces,
                                    const RasterConfig& config);

InstanceIdMap rasterize_instance_ids(const std::vector<Mesh>& world_meshes, const Camera& cam,
                                     const RasterConfig& config);

Mask threshold(std::span<const double> soft, int width, int height, double level = 0.5);
double mask_iou(const Mask& a, const Mask& b);

void write_pgm(const std::filesystem::path& path, const Mask& mask);
Mask read_pgm(const std::filesystem::path& path);
// Plain-text P2 dump of a soft map scaled to [0, 255].
void write_pgm_ascii(const std::filesystem::path& path, std::span<const double> values, int width,
                     int height);
// Binary P5 of an id map, background black and objects in distinct grays.
void write_id_pgm(const std::filesystem::path& path, const InstanceIdMap& ids);

}  // namespace sceneprior
