#pragma once

// Two-stage optimization of the network and the per-scene latent logits:
// stage 1 trains layout only (no offsets, no rasterization), stage 2 adds the
// silhouette loss and the shape decoder.

#include <filesystem>
#include <iosfwd>
#include <memory>

#include "sceneprior/dataset.hpp"
#include "sceneprior/model.hpp"
#include "sceneprior/optim.hpp"

namespace sceneprior {

struct TrainConfig {
  std::size_t stage1_epochs = 800;
  std::size_t stage2_epochs = 200;
  double lr = 3e-3;
  double stage2_lr = 3e-4;  // 0 reuses lr
  double lr_decay = 0.1;
  std::size_t stage1_decay_epoch = 300;
  std::size_t stage2_decay_epoch = 75;
  std::size_t views_per_step = 8;
  bool rotation_augmentation = false;
  LossWeights weights;
  RasterConfig raster;
  ModelConfig model;
  std::uint64_t seed = 1;

  void validate() const;
  static TrainConfig full_scale();
  std::size_t total_epochs() const { return stage1_epochs + stage2_epochs; }
  int stage_of(std::size_t epoch) const { return epoch < stage1_epochs ? 1 : 2; }
  double lr_at(std::size_t epoch) const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct SceneLoss {
  ad::Var total;
  LayoutTerms layout;
  ShapeTerms shape;
  double shape_value = 0.0;
  MatchAssignment match;
  std::size_t complete_correct = 0;
  std::size_t predictions = 0;
};

SceneTarget make_target(const SceneRecord& rec, const std::vector<std::size_t>& view_ids);

// Loss of one scene for a 1 x D latent on the tape.
SceneLoss compute_scene_loss(const Model& model, ad::Var latent, const SceneTarget& target,
                             bool stage2, const LossWeights& weights, const RasterConfig& raster);

struct EpochRecord {
  std::size_t epoch = 0;
  int stage = 1;
  double lr = 0.0;
  double loss = 0.0;
  double label = 0.0, box = 0.0, completeness = 0.0, frustum = 0.0, shape = 0.0;
  double completeness_accuracy = 0.0;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const EpochRecord& r);

class Trainer {
 public:
  Trainer(const Dataset& data, const TrainConfig& config);
  // Resumes from a checkpoint written by save().
  Trainer(const Dataset& data, const TrainConfig& config, const std::filesystem::path& checkpoint);

  EpochRecord run_epoch();
  // Runs until `epoch()` reaches `end_epoch` (clamped to the schedule),
  // appending one CSV row per epoch when `log` is given.
  void run(std::size_t end_epoch, std::ostream* log = nullptr);

  std::size_t epoch() const { return epoch_; }
  bool finished() const { return epoch_ >= config_.total_epochs(); }
  const Model& model() const { return *model_; }
  Model& model() { return *model_; }
  const Dataset& data() const { return data_; }
  const TrainConfig& config() const { return config_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::size_t> sample_views(std::size_t scene, std::size_t view_count) const;

  Dataset data_;
  TrainConfig config_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<Adam> adam_;
  std::size_t epoch_ = 0;
};

struct EvalReport {
  double layout_loss = 0.0;
  double box_l1 = 0.0;
  double silhouette_iou = 0.0;        // per object, mean over its visible views
  double gated_silhouette_iou = 0.0;  // per object, mean over views with IoU > 0.5
  double gated_coverage = 0.0;        // fraction of objects with at least one such view
  double instance_iou = 0.0;          // hard id render of the whole predicted scene
  double completeness_accuracy = 0.0;
  std::size_t objects = 0;
};

nlohmann::json to_json(const EvalReport& r);

// Scores each scene's own embedding against all of its views.
EvalReport evaluate_model(const Model& model, const Dataset& data, const LossWeights& weights,
                          const RasterConfig& raster, bool shapes = true);

}  // namespace sceneprior
