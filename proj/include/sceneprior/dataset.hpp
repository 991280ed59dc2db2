#pragma once

// Procedural toy-scene datasets: object layouts sampled by rejection, ring
// cameras, ground-truth instance masks and boxes, and the on-disk manifest.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sceneprior/losses.hpp"
#include "sceneprior/shapes.hpp"

namespace sceneprior {

struct CategoryPrior {
  std::string name;
  Vec3 mean;
  Vec3 stddev;
};

struct DatasetSpec {
  std::size_t scenes = 8;
  std::size_t min_objects = 2;
  std::size_t max_objects = 5;
  std::size_t views = 16;
  double ring_radius = 4.5;
  double ring_height = 2.8;
  double fov_degrees = 55.0;
  int image_size = 64;
  double room_half_extent = 1.6;
  std::uint64_t seed = 7;
  std::vector<CategoryPrior> priors = default_priors();

  static std::vector<CategoryPrior> default_priors();
  CategoryTable categories() const;
  void validate(std::size_t max_objects_limit = 0) const;
};

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

// Objects need this many mask pixels and their center inside the frustum
// for a view to count as one of their visible views.
inline constexpr std::size_t kMinVisiblePixels = 8;
inline constexpr std::size_t kRejectionBudget = 1000;

struct SceneRecord {
  std::string id;
  Scene scene;
  std::vector<GtView> views;
};

struct Dataset {
  CategoryTable categories;
  int width = 64;
  int height = 64;
  std::vector<SceneRecord> scenes;
};

// Masks from a hard instance-id pass and boxes from all projected vertices.
GtView render_view(const Scene& scene, const Camera& camera, const RasterConfig& raster);
std::vector<Camera> ring_cameras(const Scene& scene, const DatasetSpec& spec);

Dataset generate_dataset(const DatasetSpec& spec);
void write_dataset(const std::filesystem::path& dir, const Dataset& data, const DatasetSpec& spec);
Dataset load_dataset(const std::filesystem::path& dir);

// Adds the 90, 180 and 270 degree yaw rotations of every scene. The images
// are unchanged; only the scene and the camera rotations are rotated.
Dataset augment_rotations(const Dataset& data);

// Single-view input of reconstruction: camera plus labeled boxes and masks.
nlohmann::json view_to_json(const GtView& view, const std::vector<int>& labels,
                            const std::vector<std::string>& mask_paths);
std::pair<GtView, std::vector<int>> read_view(const std::filesystem::path& path);

}  // namespace sceneprior
