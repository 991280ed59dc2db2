#pragma once

// Bipartite matching between predicted and ground-truth objects, and the
// multi-view losses computed from that matching.

#include <optional>
#include <vector>

#include <json.hpp>

#include "sceneprior/decoders.hpp"
#include "sceneprior/geometry.hpp"
#include "sceneprior/renderer.hpp"

namespace sceneprior {

struct LossWeights {
  double label = 1.0;
  double box = 5.0;
  double completeness = 1.0;
  double frustum = 1.0;
  double shape = 2.0;
  double match_box = 5.0;

  void validate() const;
};

nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

// Cost charged per view when a prediction is not visible there.
inline constexpr double kInvisibleBoxCost = 2.0;

struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct MatchAssignment {
  std::vector<int> pred_to_gt;  // -1 when unmatched
  double total_cost = 0.0;

  std::size_t matched() const;
};

// Minimum-cost assignment of min(rows, cols) pairs.
MatchAssignment hungarian(const CostMatrix& cost);

// Ground truth of one view: per object a box (nullopt when the object is not
// among the view's visible objects) and its instance mask.
struct GtView {
  Camera camera;
  std::vector<std::optional<Box2D>> boxes;
  std::vector<Mask> masks;
};

struct SceneTarget {
  std::vector<int> labels;
  std::vector<const GtView*> views;

  std::size_t count() const { return labels.size(); }
};

// probs[k] are class probabilities; pred_boxes[k][p] is nullopt when
// prediction k is invisible in view p; gt_boxes[j][p] is nullopt when view p
// is not a visible view of object j.
CostMatrix build_cost_matrix(const std::vector<std::vector<double>>& probs,
                             const std::vector<std::vector<std::optional<Box2D>>>& pred_boxes,
                             const std::vector<int>& gt_labels,
                             const std::vector<std::vector<std::optional<Box2D>>>& gt_boxes,
                             double match_box_weight);

// Projected geometry of the first n predictions in every target view.
struct PredictionViews {
  std::vector<ad::Var> world;                                // |V| x 3 per prediction
  std::vector<std::vector<ProjectedPoints>> projected;       // [k][p]
  std::vector<std::vector<std::optional<ad::Var>>> boxes;    // [k][p], set only when in frustum
  std::vector<std::vector<bool>> in_frustum;                 // [k][p], predicted center
};

PredictionViews project_predictions(const Decoders& decoders, const LayoutVars& layout,
                                    const std::vector<ad::Var>& offsets, const Mesh& templ,
                                    const SceneTarget& target, std::size_t count);

CostMatrix build_cost_matrix(const LayoutVars& layout, const PredictionViews& pred,
                             const SceneTarget& target, double match_box_weight);

struct LayoutTerms {
  ad::Var total;
  double label = 0, box = 0, completeness = 0, frustum = 0;
};

LayoutTerms layout_loss(const LayoutVars& layout, const PredictionViews& pred,
                        const SceneTarget& target, const MatchAssignment& match,
                        const LossWeights& weights);

struct ShapeTerms {
  std::optional<ad::Var> total;  // nullopt when no view passes the gate
  std::size_t gated_objects = 0;
  std::size_t gated_views = 0;
};

// Per matched object, pixelwise BCE between its soft silhouette and the gt
// mask, summed over views whose thresholded IoU exceeds 0.5, then averaged
// over objects with at least one such view.
ShapeTerms shape_loss(const PredictionViews& pred, const Mesh& templ, const SceneTarget& target,
                      const MatchAssignment& match, const RasterConfig& raster);

// Value of the shape loss for fixed silhouettes, used for fixtures:
// silhouettes[k][p] and masks[k][p] per matched object and view.
double shape_loss_value(const std::vector<std::vector<std::vector<double>>>& silhouettes,
                        const std::vector<std::vector<Mask>>& masks);

}  // namespace sceneprior
