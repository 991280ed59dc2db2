#include "sceneprior/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sceneprior {

Scene synthesize(const Model& model, std::uint64_t seed) {
  return model.decode_scene(random_latent(model.anchors(), seed));
}

std::vector<Scene> interpolate(const Model& model, const LatentVector& z_a, const LatentVector& z_b,
                               std::size_t steps) {
  if (steps < 2) throw Error("bad-steps", "interpolation needs at least 2 steps");
  const std::size_t d = model.config().generator.d_model;
  if (z_a.size() != d || z_b.size() != d)
    throw Error("shape-mismatch", "latents must have dimension " + std::to_string(d));
  std::vector<Scene> out;
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps - 1);
    out.push_back(model.decode_scene(slerp(z_a, z_b, t)));
  }
  return out;
}

double ReconstructConfig::lr_at(std::size_t iteration) const {
  return step_decay_lr(lr, decay, static_cast<std::int64_t>(decay_iteration),
                       static_cast<std::int64_t>(iteration));
}

namespace {

struct Fit {
  std::vector<double> logits;
  double final_loss = 0.0;
};

Fit fit_logits(const Model& model, const SceneTarget& target, std::vector<double> init,
               std::size_t iterations, const ReconstructConfig& config) {
  ad::ParamTensor logits("reconstruct.logits", {1, init.size()});
  logits.values = std::move(init);
  RmsProp opt({&logits});
  Fit out;
  for (std::size_t it = 0; it < iterations; ++it) {
    ad::Tape tape;
    ad::Var u = tape.param(logits);
    SceneLoss loss = compute_scene_loss(model, compose_latent(u, model.anchors()), target, true,
                                        config.weights, config.raster);
    out.final_loss = loss.total.item();
    tape.backward(loss.total, false);
    auto g = tape.grad(u.id());
    logits.zero_grad();
    if (!g.empty()) std::copy(g.begin(), g.end(), logits.grad.begin());
    opt.step(config.lr_at(it));
  }
  out.logits = std::move(logits.values);
  return out;
}

}  // namespace

ReconstructResult reconstruct_single_view(const Model& model, const GtView& view,
                                          const std::vector<int>& labels,
                                          const ReconstructConfig& config) {
  if (labels.empty()) throw Error("empty-view", "reconstruction needs at least one annotated object");
  if (labels.size() > model.config().generator.max_objects)
    throw Error("too-many-objects", "view has more objects than the model generates");
  const std::size_t m = model.anchors().count();
  SceneTarget target{labels, {&view}};
  std::vector<double> start(m, 0.0);
  if (config.init_logits) {
    if (config.init_logits->size() != m) throw Error("shape-mismatch", "init logits size mismatch");
    start = *config.init_logits;
  } else if (config.restarts > 0 && config.screen_iterations < config.iterations) {
    double best = fit_logits(model, target, start, config.screen_iterations, config).final_loss;
    for (std::size_t r = 1; r <= config.restarts; ++r) {
      std::vector<double> cand = random_logits(m, derive_seed(config.seed, r));
      const double loss = fit_logits(model, target, cand, config.screen_iterations, config).final_loss;
      if (loss < best) {
        best = loss;
        start = std::move(cand);
      }
    }
  }
  Fit fit = fit_logits(model, target, std::move(start), config.iterations, config);
  ReconstructResult out;
  out.final_loss = fit.final_loss;
  out.logits = std::move(fit.logits);
  out.z = compose_latent(model.anchors(), WeightSimplex{out.logits});
  out.scene = model.decode_first(out.z, labels.size());
  return out;
}

std::vector<Vec3> sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.empty()) throw Error("empty-mesh", "cannot sample an empty mesh");
  std::vector<double> cumulative;
  double total = 0.0;
  for (const Face& f : mesh.faces) {
    total += mesh_surface_area({{mesh.vertices[static_cast<std::size_t>(f[0])],
                                 mesh.vertices[static_cast<std::size_t>(f[1])],
                                 mesh.vertices[static_cast<std::size_t>(f[2])]},
                                {{0, 1, 2}}});
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw Error("empty-mesh", "mesh has zero surface area");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = unit(rng) * total;
    const auto idx = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) -
                                 cumulative.begin()),
        cumulative.size() - 1);
    const Face& f = mesh.faces[idx];
    const double r1 = std::sqrt(unit(rng)), r2 = unit(rng);
    const double a = 1.0 - r1, b = r1 * (1.0 - r2), c = r1 * r2;
    const Vec3& p = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& q = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& r = mesh.vertices[static_cast<std::size_t>(f[2])];
    out.push_back({a * p[0] + b * q[0] + c * r[0], a * p[1] + b * q[1] + c * r[1],
                   a * p[2] + b * q[2] + c * r[2]});
  }
  return out;
}

namespace {

double directional(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double sum = 0.0;
  for (const Vec3& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : b) {
      const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(a.size());
}

}  // namespace

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw Error("empty-input", "chamfer distance of an empty point set");
  return 0.5 * (directional(a, b) + directional(b, a));
}

double box_iou_3d(const Vec3& center_a, const Vec3& size_a, const Vec3& center_b, const Vec3& size_b) {
  double inter = 1.0, vol_a = 1.0, vol_b = 1.0;
  for (int i = 0; i < 3; ++i) {
    const double lo = std::max(center_a[i] - size_a[i] / 2, center_b[i] - size_b[i] / 2);
    const double hi = std::min(center_a[i] + size_a[i] / 2, center_b[i] + size_b[i] / 2);
    inter *= std::max(0.0, hi - lo);
    vol_a *= size_a[i];
    vol_b *= size_b[i];
  }
  const double uni = vol_a + vol_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<double> category_histogram(const std::vector<Scene>& scenes, std::size_t num_classes) {
  std::vector<double> h(num_classes > 0 ? num_classes - 1 : 0, 0.0);
  for (const auto& s : scenes)
    for (const auto& o : s.objects)
      if (o.label > 0 && static_cast<std::size_t>(o.label) < num_classes) h[static_cast<std::size_t>(o.label) - 1] += 1.0;
  return h;
}

double category_kl(const std::vector<double>& p, const std::vector<double>& q, double eps) {
  if (p.size() != q.size()) throw Error("shape-mismatch", "histograms differ in length");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i] + eps;
    sq += q[i] + eps;
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = (p[i] + eps) / sp, b = (q[i] + eps) / sq;
    kl += a * std::log(a / b);
  }
  return std::max(0.0, kl);
}

std::vector<int> pair_objects(const Scene& pred, const Scene& gt) {
  CostMatrix cost{gt.objects.size(), pred.objects.size(), {}};
  for (const auto& g : gt.objects)
    for (const auto& p : pred.objects) {
      double c = p.label == g.label ? 0.0 : 1.0;
      for (int i = 0; i < 3; ++i) c += std::abs(p.center[i] - g.center[i]);
      cost.values.push_back(c);
    }
  return hungarian(cost).pred_to_gt;
}

nlohmann::json to_json(const MetricsReport& r) {
  return {{"kl", r.kl}, {"box_iou", r.box_iou}, {"chamfer", r.chamfer}, {"pairs", r.pairs}};
}

MetricsReport compute_metrics(const std::vector<Scene>& pred, const std::vector<Scene>& gt,
                              std::uint64_t seed) {
  if (pred.size() != gt.size()) throw Error("shape-mismatch", "need one prediction per gt scene");
  MetricsReport out;
  std::size_t classes = 0;
  for (const auto& s : gt) classes = std::max(classes, s.categories.size());
  for (const auto& s : pred) classes = std::max(classes, s.categories.size());
  out.kl = category_kl(category_histogram(pred, classes), category_histogram(gt, classes));
  for (std::size_t s = 0; s < gt.size(); ++s) {
    const std::vector<int> pairs = pair_objects(pred[s], gt[s]);
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      if (pairs[j] < 0) continue;
      const ObjectInstance& p = pred[s].objects[static_cast<std::size_t>(pairs[j])];
      const ObjectInstance& g = gt[s].objects[j];
      out.box_iou += box_iou_3d(p.center, p.size, g.center, g.size);
      if (!p.mesh.empty() && !g.mesh.empty())
        out.chamfer += chamfer_distance(sample_surface(p.world_mesh(), kChamferSamples, seed),
                                        sample_surface(g.world_mesh(), kChamferSamples, seed + 1));
      ++out.pairs;
    }
  }
  if (out.pairs) {
    out.box_iou /= static_cast<double>(out.pairs);
    out.chamfer /= static_cast<double>(out.pairs);
  }
  return out;
}

RetrievalResult retrieve_shape(const ObjectInstance& object, const RetrievalLibrary& library,
                               std::size_t samples, std::uint64_t seed) {
  const auto shelf = library.shelf(object.label);
  if (shelf.empty())
    throw Error("empty-shelf", "library has no mesh for label " + std::to_string(object.label));
  Vec3 center = object.center, size = object.size;
  if (center[1] <= 1.0) {
    const double top = center[1] + size[1] / 2;
    size[1] = top;
    center[1] = top / 2;
  }
  const std::vector<Vec3> query = sample_surface(object.world_mesh(), samples, seed);
  RetrievalResult best;
  best.chamfer = std::numeric_limits<double>::infinity();
  for (const LibraryEntry* entry : shelf) {
    for (int q = 0; q < 4; ++q) {
      Mesh world = to_world(fit_unit_box(rotate_yaw(entry->mesh, q)), half_extents(size), center);
      const double cd = chamfer_distance(sample_surface(world, samples, seed), query);
      if (cd < best.chamfer) {
        best = {entry, q * 90, cd, std::move(world)};
      }
    }
  }
  return best;
}

MetricsReport evaluate_reconstruction(const Model& model, const Dataset& data, std::size_t views,
                                      const ReconstructConfig& config) {
  if (data.scenes.empty()) throw Error("empty-dataset", "no scenes to reconstruct from");
  std::vector<Scene> pred, truth;
  for (std::size_t i = 0; i < views; ++i) {
    const SceneRecord& rec = data.scenes[i % data.scenes.size()];
    const GtView& full = rec.views[(i * 5) % rec.views.size()];
    GtView view;
    view.camera = full.camera;
    std::vector<int> labels;
    Scene visible;
    visible.categories = rec.scene.categories;
    for (std::size_t j = 0; j < rec.scene.objects.size(); ++j)
      if (full.boxes[j]) {
        view.boxes.push_back(full.boxes[j]);
        view.masks.push_back(full.masks[j]);
        labels.push_back(rec.scene.objects[j].label);
        visible.objects.push_back(rec.scene.objects[j]);
      }
    if (labels.empty()) continue;
    pred.push_back(reconstruct_single_view(model, view, labels, config).scene);
    truth.push_back(std::move(visible));
  }
  return compute_metrics(pred, truth);
}

}  // namespace sceneprior
