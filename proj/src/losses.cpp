#include "sceneprior/losses.hpp"

#include <cmath>
#include <limits>

namespace sceneprior {

void LossWeights::validate() const {
  for (double w : {label, box, completeness, frustum, shape, match_box})
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("bad-config", "loss weights must be finite and >= 0");
}

nlohmann::json to_json(const LossWeights& w) {
  return {{"label", w.label},       {"box", w.box},     {"completeness", w.completeness},
          {"frustum", w.frustum},   {"shape", w.shape}, {"match_box", w.match_box}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
  LossWeights w;
  w.label = j.value("label", w.label);
  w.box = j.value("box", w.box);
  w.completeness = j.value("completeness", w.completeness);
  w.frustum = j.value("frustum", w.frustum);
  w.shape = j.value("shape", w.shape);
  w.match_box = j.value("match_box", w.match_box);
  w.validate();
  return w;
}

std::size_t MatchAssignment::matched() const {
  std::size_t n = 0;
  for (int j : pred_to_gt) n += j >= 0;
  return n;
}

namespace {

// Shortest augmenting paths with row/column potentials; requires rows <= cols.
std::vector<int> solve_assignment(const CostMatrix& c) {
  const std::size_t n = c.rows, m = c.cols;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = c.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  return row_to_col;
}

}  // namespace

MatchAssignment hungarian(const CostMatrix& cost) {
  for (double x : cost.values)
    if (!std::isfinite(x)) throw Error("non-finite-cost", "cost matrix has a non-finite entry");
  MatchAssignment out;
  out.pred_to_gt.assign(cost.rows, -1);
  if (cost.rows == 0 || cost.cols == 0) return out;
  if (cost.rows <= cost.cols) {
    out.pred_to_gt = solve_assignment(cost);
  } else {
    CostMatrix t{cost.cols, cost.rows, std::vector<double>(cost.values.size())};
    for (std::size_t r = 0; r < cost.rows; ++r)
      for (std::size_t c = 0; c < cost.cols; ++c) t.values[c * t.cols + r] = cost.at(r, c);
    const std::vector<int> col_to_row = solve_assignment(t);
    for (std::size_t c = 0; c < col_to_row.size(); ++c)
      if (col_to_row[c] >= 0) out.pred_to_gt[static_cast<std::size_t>(col_to_row[c])] = static_cast<int>(c);
  }
  for (std::size_t r = 0; r < cost.rows; ++r)
    if (out.pred_to_gt[r] >= 0) out.total_cost += cost.at(r, static_cast<std::size_t>(out.pred_to_gt[r]));
  return out;
}

CostMatrix build_cost_matrix(const std::vector<std::vector<double>>& probs,
                             const std::vector<std::vector<std::optional<Box2D>>>& pred_boxes,
                             const std::vector<int>& gt_labels,
                             const std::vector<std::vector<std::optional<Box2D>>>& gt_boxes,
                             double match_box_weight) {
  CostMatrix cost{probs.size(), gt_labels.size(), {}};
  cost.values.resize(cost.rows * cost.cols);
  for (std::size_t k = 0; k < cost.rows; ++k) {
    for (std::size_t j = 0; j < cost.cols; ++j) {
      double box_sum = 0.0;
      std::size_t views = 0;
      for (std::size_t p = 0; p < gt_boxes[j].size(); ++p) {
        if (!gt_boxes[j][p]) continue;
        ++views;
        const auto& pb = pred_boxes[k][p];
        box_sum += pb ? box_l1(*pb, *gt_boxes[j][p]) : kInvisibleBoxCost;
      }
      const double box_term = views ? box_sum / static_cast<double>(views) : 0.0;
      cost.values[k * cost.cols + j] =
          -probs[k][static_cast<std::size_t>(gt_labels[j])] + match_box_weight * box_term;
    }
  }
  return cost;
}

PredictionViews project_predictions(const Decoders& decoders, const LayoutVars& layout,
                                    const std::vector<ad::Var>& offsets, const Mesh& templ,
                                    const SceneTarget& target, std::size_t count) {
  PredictionViews out;
  for (std::size_t k = 0; k < count; ++k) {
    out.world.push_back(decoders.world_vertices(layout, k, templ, offsets[k]));
    const Vec3 center{layout.center.at(k, 0), layout.center.at(k, 1), layout.center.at(k, 2)};
    auto& proj = out.projected.emplace_back();
    auto& boxes = out.boxes.emplace_back();
    auto& inside = out.in_frustum.emplace_back();
    for (const GtView* view : target.views) {
      proj.push_back(project(out.world.back(), view->camera));
      const bool in = in_frustum(center, view->camera);
      inside.push_back(in);
      boxes.push_back(in ? box_from_projection(proj.back()) : std::nullopt);
    }
  }
  return out;
}

namespace {

Box2D to_box(const ad::Var& v) { return {v.at(0, 0), v.at(0, 1), v.at(0, 2), v.at(0, 3)}; }

}  // namespace

CostMatrix build_cost_matrix(const LayoutVars& layout, const PredictionViews& pred,
                             const SceneTarget& target, double match_box_weight) {
  const std::size_t n = pred.world.size();
  std::vector<std::vector<double>> probs(n);
  std::vector<std::vector<std::optional<Box2D>>> pred_boxes(n);
  const std::size_t nc = layout.logits.cols();
  for (std::size_t k = 0; k < n; ++k) {
    double mx = layout.logits.at(k, 0);
    for (std::size_t c = 1; c < nc; ++c) mx = std::max(mx, layout.logits.at(k, c));
    double z = 0.0;
    probs[k].resize(nc);
    for (std::size_t c = 0; c < nc; ++c) z += probs[k][c] = std::exp(layout.logits.at(k, c) - mx);
    for (double& p : probs[k]) p /= z;
    for (const auto& b : pred.boxes[k]) pred_boxes[k].push_back(b ? std::optional(to_box(*b)) : std::nullopt);
  }
  std::vector<std::vector<std::optional<Box2D>>> gt_boxes(target.count());
  for (std::size_t j = 0; j < target.count(); ++j)
    for (const GtView* view : target.views) gt_boxes[j].push_back(view->boxes[j]);
  return build_cost_matrix(probs, pred_boxes, target.labels, gt_boxes, match_box_weight);
}

LayoutTerms layout_loss(const LayoutVars& layout, const PredictionViews& pred,
                        const SceneTarget& target, const MatchAssignment& match,
                        const LossWeights& weights) {
  ad::Tape& tape = layout.logits.tape();
  const std::size_t total = layout.count();
  const std::size_t n = target.count();
  if (n > total)
    throw Error("too-many-objects", "scene has " + std::to_string(n) + " objects but the rollout has " +
                                        std::to_string(total));

  std::vector<ad::Var> ce;
  std::vector<double> complete(total, 0.0);
  for (std::size_t k = 0; k < total; ++k) {
    std::size_t label = kVoidLabel;
    if (k < match.pred_to_gt.size() && match.pred_to_gt[k] >= 0) {
      label = static_cast<std::size_t>(target.labels[static_cast<std::size_t>(match.pred_to_gt[k])]);
    }
    if (k < n) complete[k] = 1.0;
    ce.push_back(ad::cross_entropy_logits(ad::slice_rows(layout.logits, k, 1), label));
  }
  ad::Var l_label = ad::scale(ad::sum(ad::concat_rows(ce)), 1.0 / static_cast<double>(total));
  ad::Var l_complete = ad::bce_with_logits(layout.completeness_logit, complete);

  std::vector<ad::Var> box_terms, frustum_terms;
  for (std::size_t k = 0; k < match.pred_to_gt.size() && k < pred.world.size(); ++k) {
    if (match.pred_to_gt[k] < 0) continue;
    const auto j = static_cast<std::size_t>(match.pred_to_gt[k]);
    std::vector<ad::Var> boxes, rays;
    for (std::size_t p = 0; p < target.views.size(); ++p) {
      const auto& gt = target.views[p]->boxes[j];
      if (!gt) continue;
      if (const auto& b = pred.boxes[k][p]) {
        const auto a = gt->as_array();
        boxes.push_back(ad::l1_distance(*b, tape.constant(1, 4, {a.begin(), a.end()})));
      } else {
        rays.push_back(frustum_term(ad::slice_rows(layout.center, k, 1), *gt, target.views[p]->camera));
      }
    }
    if (!boxes.empty())
      box_terms.push_back(ad::scale(ad::sum(ad::concat_rows(boxes)), 1.0 / static_cast<double>(boxes.size())));
    if (!rays.empty())
      frustum_terms.push_back(ad::scale(ad::sum(ad::concat_rows(rays)), 1.0 / static_cast<double>(rays.size())));
  }
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  ad::Var l_box = box_terms.empty() ? tape.scalar(0.0) : ad::scale(ad::sum(ad::concat_rows(box_terms)), inv_n);
  ad::Var l_frustum =
      frustum_terms.empty() ? tape.scalar(0.0) : ad::scale(ad::sum(ad::concat_rows(frustum_terms)), inv_n);

  LayoutTerms out;
  out.label = l_label.item();
  out.completeness = l_complete.item();
  out.box = l_box.item();
  out.frustum = l_frustum.item();
  out.total = ad::add(ad::add(ad::scale(l_label, weights.label), ad::scale(l_box, weights.box)),
                      ad::add(ad::scale(l_complete, weights.completeness),
                              ad::scale(l_frustum, weights.frustum)));
  return out;
}

namespace {

std::vector<double> mask_values(const Mask& m) { return {m.data.begin(), m.data.end()}; }

}  // namespace

ShapeTerms shape_loss(const PredictionViews& pred, const Mesh& templ, const SceneTarget& target,
                      const MatchAssignment& match, const RasterConfig& raster) {
  ShapeTerms out;
  std::vector<ad::Var> per_object;
  for (std::size_t k = 0; k < match.pred_to_gt.size() && k < pred.world.size(); ++k) {
    if (match.pred_to_gt[k] < 0) continue;
    const auto j = static_cast<std::size_t>(match.pred_to_gt[k]);
    std::vector<ad::Var> gated;
    for (std::size_t p = 0; p < target.views.size(); ++p) {
      if (!target.views[p]->boxes[j]) continue;
      const Mask& gt = target.views[p]->masks[j];
      SoftSilhouette sil = rasterize_silhouette(pred.projected[k][p], templ.faces, raster);
      const auto occ = sil.occupancy.value();
      if (mask_iou(threshold(occ, raster.width, raster.height), gt) <= 0.5) continue;
      gated.push_back(ad::bce(sil.occupancy, mask_values(gt)));
    }
    if (gated.empty()) continue;
    out.gated_views += gated.size();
    per_object.push_back(ad::sum(ad::concat_rows(gated)));
  }
  out.gated_objects = per_object.size();
  if (!per_object.empty())
    out.total = ad::scale(ad::sum(ad::concat_rows(per_object)), 1.0 / static_cast<double>(per_object.size()));
  return out;
}

double shape_loss_value(const std::vector<std::vector<std::vector<double>>>& silhouettes,
                        const std::vector<std::vector<Mask>>& masks) {
  double total = 0.0;
  std::size_t objects = 0;
  for (std::size_t k = 0; k < silhouettes.size(); ++k) {
    double sum = 0.0;
    bool any = false;
    for (std::size_t p = 0; p < silhouettes[k].size(); ++p) {
      const Mask& m = masks[k][p];
      const auto& s = silhouettes[k][p];
      if (mask_iou(threshold(s, m.width, m.height), m) <= 0.5) continue;
      any = true;
      double bce = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double q = std::clamp(s[i], 1e-12, 1.0 - 1e-12);
        bce -= m.data[i] ? std::log(q) : std::log(1.0 - q);
      }
      sum += bce / static_cast<double>(s.size());
    }
    if (any) {
      total += sum;
      ++objects;
    }
  }
  return objects ? total / static_cast<double>(objects) : 0.0;
}

}  // namespace sceneprior
