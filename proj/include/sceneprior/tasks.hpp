#pragma once

// Downstream uses of a trained prior (synthesis, interpolation, single-view
// reconstruction, shape retrieval) and the evaluation metrics.

#include <optional>
#include <vector>

#include <json.hpp>

#include "sceneprior/model.hpp"
#include "sceneprior/losses.hpp"
#include "sceneprior/shapes.hpp"
#include "sceneprior/training.hpp"

namespace sceneprior {

Scene synthesize(const Model& model, std::uint64_t seed);

// Decodes slerp(z_a, z_b, i / (steps - 1)) for i in [0, steps).
std::vector<Scene> interpolate(const Model& model, const LatentVector& z_a, const LatentVector& z_b,
                               std::size_t steps);

struct ReconstructConfig {
  std::size_t iterations = 1000;
  double lr = 0.01;
  std::size_t decay_iteration = 500;
  double decay = 0.1;
  LossWeights weights = no_completeness();
  RasterConfig raster;
  std::optional<std::vector<double>> init_logits;  // zeros when unset
  // Without init_logits, the zero start and `restarts` random draws are each
  // fitted for `screen_iterations`; the one with the lowest view loss is then
  // fitted for the full schedule from its start.
  std::size_t restarts = 7;
  std::size_t screen_iterations = 100;
  std::uint64_t seed = 0;

  static LossWeights no_completeness() {
    LossWeights w;
    w.completeness = 0.0;
    return w;
  }
  double lr_at(std::size_t iteration) const;
};

struct ReconstructResult {
  Scene scene;
  std::vector<double> logits;
  LatentVector z;
  double final_loss = 0.0;
};

// Fits fresh latent logits to one view with the network frozen and returns
// the first n decoded objects, n being the number of annotated objects.
// Start selection looks only at the view loss.
ReconstructResult reconstruct_single_view(const Model& model, const GtView& view,
                                          const std::vector<int>& labels,
                                          const ReconstructConfig& config);

// ---- metrics ----------------------------------------------------------------

inline constexpr std::size_t kChamferSamples = 1024;

// Area-weighted uniform samples on the surface.
std::vector<Vec3> sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed);
// Mean of the two directional mean nearest-neighbor Euclidean distances.
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
double box_iou_3d(const Vec3& center_a, const Vec3& size_a, const Vec3& center_b, const Vec3& size_b);
// Object counts per non-void category.
std::vector<double> category_histogram(const std::vector<Scene>& scenes, std::size_t num_classes);
// KL(p || q) of two count vectors, each smoothed by eps and normalized.
double category_kl(const std::vector<double>& p, const std::vector<double>& q, double eps = 1e-8);

// Hungarian pairing of predicted and gt objects on center L1 plus a unit
// cost for a label mismatch. Returns pred index per gt index (-1 unpaired).
std::vector<int> pair_objects(const Scene& pred, const Scene& gt);

struct MetricsReport {
  double kl = 0.0;
  double box_iou = 0.0;
  double chamfer = 0.0;
  std::size_t pairs = 0;
};

nlohmann::json to_json(const MetricsReport& r);

MetricsReport compute_metrics(const std::vector<Scene>& pred, const std::vector<Scene>& gt,
                              std::uint64_t seed = 0);

// Reconstructs `views` held-in views of the training set, view i taken from
// scene i mod S at view index 5i mod V, and scores each against the objects
// annotated in it. Views without annotated objects are skipped.
MetricsReport evaluate_reconstruction(const Model& model, const Dataset& data, std::size_t views,
                                      const ReconstructConfig& config);


// ---- retrieval ----------------------------------------------------------------

struct RetrievalResult {
  const LibraryEntry* entry = nullptr;
  int rotation_degrees = 0;
  double chamfer = 0.0;
  Mesh world;
};

// Candidates of the object's category are rotated in 90 degree yaw steps,
// stretched to fill the object's box (extended down to the floor when the
// box center is at most 1 m high) and compared to the object's surface.
RetrievalResult retrieve_shape(const ObjectInstance& object, const RetrievalLibrary& library,
                               std::size_t samples = kChamferSamples, std::uint64_t seed = 0);

}  // namespace sceneprior
