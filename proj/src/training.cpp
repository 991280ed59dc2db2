#include "sceneprior/training.hpp"

#include <algorithm>
#include <ostream>

namespace sceneprior {

void TrainConfig::validate() const {
  if (stage1_epochs < 1) throw Error("bad-config", "stage1_epochs must be >= 1");
  if (views_per_step < 1) throw Error("bad-config", "views_per_step must be >= 1");
  if (!(lr > 0.0) || stage2_lr < 0.0) throw Error("bad-config", "learning rates must be positive");
  weights.validate();
  raster.validate();
  model.validate();
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.stage1_epochs = 800;
  c.stage2_epochs = 500;
  c.lr = 1e-4;
  c.stage2_lr = 0.0;
  c.stage1_decay_epoch = 300;
  c.stage2_decay_epoch = 300;
  c.views_per_step = 20;
  c.raster = RasterConfig::full_scale(c.raster.width, c.raster.height);
  c.model.generator = GeneratorConfig::full_scale(c.model.generator.max_objects);
  c.model.decoder = DecoderConfig::full_scale(c.model.decoder.num_classes);
  return c;
}

double TrainConfig::lr_at(std::size_t epoch) const {
  if (stage_of(epoch) == 1)
    return step_decay_lr(lr, lr_decay, static_cast<std::int64_t>(stage1_decay_epoch),
                         static_cast<std::int64_t>(epoch));
  return step_decay_lr(stage2_lr > 0.0 ? stage2_lr : lr, lr_decay,
                       static_cast<std::int64_t>(stage2_decay_epoch),
                       static_cast<std::int64_t>(epoch - stage1_epochs));
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"stage1_epochs", c.stage1_epochs},
          {"stage2_epochs", c.stage2_epochs},
          {"lr", c.lr},
          {"stage2_lr", c.stage2_lr},
          {"lr_decay", c.lr_decay},
          {"stage1_decay_epoch", c.stage1_decay_epoch},
          {"stage2_decay_epoch", c.stage2_decay_epoch},
          {"views_per_step", c.views_per_step},
          {"rotation_augmentation", c.rotation_augmentation},
          {"weights", to_json(c.weights)},
          {"raster",
           {{"width", c.raster.width},
            {"height", c.raster.height},
            {"faces_per_pixel", c.raster.faces_per_pixel},
            {"blur_radius", c.raster.blur_radius},
            {"blend_sigma", c.raster.blend_sigma}}},
          {"model", to_json(c.model)},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c = j.value("preset", std::string()) == "full" ? TrainConfig::full_scale() : TrainConfig{};
  try {
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.lr = j.value("lr", c.lr);
    c.stage2_lr = j.value("stage2_lr", c.stage2_lr);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.stage1_decay_epoch = j.value("stage1_decay_epoch", c.stage1_decay_epoch);
    c.stage2_decay_epoch = j.value("stage2_decay_epoch", c.stage2_decay_epoch);
    c.views_per_step = j.value("views_per_step", c.views_per_step);
    c.rotation_augmentation = j.value("rotation_augmentation", c.rotation_augmentation);
    if (j.contains("weights")) c.weights = loss_weights_from_json(j["weights"]);
    if (j.contains("raster")) {
      const auto& r = j["raster"];
      c.raster.width = r.value("width", c.raster.width);
      c.raster.height = r.value("height", c.raster.height);
      c.raster.faces_per_pixel = r.value("faces_per_pixel", c.raster.faces_per_pixel);
      c.raster.blur_radius = r.value("blur_radius", c.raster.blur_radius);
      c.raster.blend_sigma = r.value("blend_sigma", c.raster.blend_sigma);
    }
    if (j.contains("model")) c.model = model_config_from_json(j["model"]);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad-config", e.what());
  }
  c.validate();
  return c;
}

SceneTarget make_target(const SceneRecord& rec, const std::vector<std::size_t>& view_ids) {
  SceneTarget t;
  for (const auto& obj : rec.scene.objects) t.labels.push_back(obj.label);
  for (std::size_t v : view_ids) t.views.push_back(&rec.views.at(v));
  return t;
}

SceneLoss compute_scene_loss(const Model& model, ad::Var latent, const SceneTarget& target,
                             bool stage2, const LossWeights& weights, const RasterConfig& raster) {
  const std::size_t steps = model.config().generator.max_objects;
  if (target.count() > steps)
    throw Error("too-many-objects", "scene has " + std::to_string(target.count()) +
                                        " objects, the model generates at most " + std::to_string(steps));
  SceneVars vars = model.decode(latent, steps, stage2);
  const Mesh& templ = model.templ().mesh;
  PredictionViews pred =
      project_predictions(model.decoders(), vars.layout, vars.offsets, templ, target, target.count());
  SceneLoss out;
  out.match = hungarian(build_cost_matrix(vars.layout, pred, target, weights.match_box));
  out.match.pred_to_gt.resize(steps, -1);
  out.layout = layout_loss(vars.layout, pred, target, out.match, weights);
  out.total = out.layout.total;
  if (stage2) {
    out.shape = shape_loss(pred, templ, target, out.match, raster);
    if (out.shape.total) {
      out.shape_value = out.shape.total->item();
      out.total = ad::add(out.total, ad::scale(*out.shape.total, weights.shape));
    }
  }
  out.predictions = steps;
  for (std::size_t k = 0; k < steps; ++k)
    out.complete_correct += (vars.layout.completeness.at(k, 0) >= 0.5) == (k < target.count());
  return out;
}

void write_metrics_header(std::ostream& os) {
  os << "epoch,stage,lr,loss,label,box,completeness,frustum,shape,completeness_accuracy\n";
}

void write_metrics_row(std::ostream& os, const EpochRecord& r) {
  const auto old = os.precision(10);
  os << r.epoch << ',' << r.stage << ',' << r.lr << ',' << r.loss << ',' << r.label << ',' << r.box
     << ',' << r.completeness << ',' << r.frustum << ',' << r.shape << ',' << r.completeness_accuracy
     << '\n';
  os.precision(old);
}

namespace {

ModelConfig sized_model(const TrainConfig& config, const Dataset& data) {
  ModelConfig m = config.model;
  m.num_scenes = data.scenes.size();
  m.categories = data.categories.names();
  m.decoder.num_classes = m.categories.size();
  return m;
}

Dataset prepare(const Dataset& data, const TrainConfig& config) {
  if (data.scenes.empty()) throw Error("empty-dataset", "training needs at least one scene");
  for (const auto& rec : data.scenes)
    if (rec.views.empty()) throw Error("empty-dataset", "scene " + rec.id + " has no views");
  return config.rotation_augmentation ? augment_rotations(data) : data;
}

}  // namespace

Trainer::Trainer(const Dataset& data, const TrainConfig& config)
    : data_(prepare(data, config)), config_(config) {
  config_.validate();
  // Soft silhouettes are compared pixel by pixel with the dataset masks.
  config_.raster.width = data_.width;
  config_.raster.height = data_.height;
  config_.model = sized_model(config_, data_);
  model_ = std::make_unique<Model>(config_.model);
  adam_ = std::make_unique<Adam>(model_->store().all());
}

Trainer::Trainer(const Dataset& data, const TrainConfig& config, const std::filesystem::path& checkpoint)
    : Trainer(data, config) {
  const std::vector<NamedTensor> tensors = read_tensors(checkpoint);
  model_->store().load(tensors);
  adam_->load_state(tensors);
  epoch_ = static_cast<std::size_t>(find_tensor(tensors, "train.epoch").values.at(0));
}

std::vector<std::size_t> Trainer::sample_views(std::size_t scene, std::size_t view_count) const {
  std::vector<std::size_t> ids(view_count);
  for (std::size_t i = 0; i < view_count; ++i) ids[i] = i;
  const std::size_t take = std::min(config_.views_per_step, view_count);
  Rng rng(derive_seed(config_.seed, 200, epoch_, scene));
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, view_count - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(take);
  std::sort(ids.begin(), ids.end());
  return ids;
}

EpochRecord Trainer::run_epoch() {
  if (finished()) throw Error("training-finished", "schedule already complete");
  EpochRecord rec;
  rec.epoch = epoch_;
  rec.stage = config_.stage_of(epoch_);
  rec.lr = config_.lr_at(epoch_);
  const bool stage2 = rec.stage == 2;
  const double inv_s = 1.0 / static_cast<double>(data_.scenes.size());
  std::size_t correct = 0, predictions = 0;
  adam_->zero_grad();
  for (std::size_t s = 0; s < data_.scenes.size(); ++s) {
    const SceneRecord& scene = data_.scenes[s];
    const SceneTarget target = make_target(scene, sample_views(s, scene.views.size()));
    ad::Tape tape;
    ad::Var z = compose_latent(tape.param(model_->embedding(s)), model_->anchors());
    SceneLoss loss = compute_scene_loss(*model_, z, target, stage2, config_.weights, config_.raster);
    tape.backward(ad::scale(loss.total, inv_s));
    rec.loss += loss.total.item() * inv_s;
    rec.label += loss.layout.label * inv_s;
    rec.box += loss.layout.box * inv_s;
    rec.completeness += loss.layout.completeness * inv_s;
    rec.frustum += loss.layout.frustum * inv_s;
    rec.shape += loss.shape_value * inv_s;
    correct += loss.complete_correct;
    predictions += loss.predictions;
  }
  rec.completeness_accuracy = static_cast<double>(correct) / static_cast<double>(predictions);
  adam_->step(rec.lr);
  ++epoch_;
  return rec;
}

void Trainer::run(std::size_t end_epoch, std::ostream* log) {
  end_epoch = std::min(end_epoch, config_.total_epochs());
  while (epoch_ < end_epoch) {
    const EpochRecord rec = run_epoch();
    if (log) {
      write_metrics_row(*log, rec);
      log->flush();
    }
  }
}

void Trainer::save(const std::filesystem::path& path) const {
  std::vector<NamedTensor> extra = adam_->state();
  extra.push_back({"train.epoch", {1}, {static_cast<double>(epoch_)}});
  save_model(path, *model_, extra);
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"layout_loss", r.layout_loss},
          {"box_l1", r.box_l1},
          {"silhouette_iou", r.silhouette_iou},
          {"gated_silhouette_iou", r.gated_silhouette_iou},
          {"gated_coverage", r.gated_coverage},
          {"instance_iou", r.instance_iou},
          {"completeness_accuracy", r.completeness_accuracy},
          {"objects", r.objects}};
}

EvalReport evaluate_model(const Model& model, const Dataset& data, const LossWeights& weights,
                          const RasterConfig& raster, bool shapes) {
  EvalReport out;
  std::size_t correct = 0, predictions = 0, gated_objects = 0;
  for (std::size_t s = 0; s < data.scenes.size(); ++s) {
    const SceneRecord& rec = data.scenes[s];
    std::vector<std::size_t> all(rec.views.size());
    for (std::size_t v = 0; v < all.size(); ++v) all[v] = v;
    const SceneTarget target = make_target(rec, all);
    ad::Tape tape;
    const LatentVector z = model.scene_latent(s);
    ad::Var zv = tape.constant(1, z.size(), z);
    SceneLoss loss = compute_scene_loss(model, zv, target, false, weights, raster);
    out.layout_loss += loss.layout.total.item() / static_cast<double>(data.scenes.size());
    correct += loss.complete_correct;
    predictions += loss.predictions;

    SceneVars vars = model.decode(zv, model.config().generator.max_objects, shapes);
    std::vector<Mesh> predicted;
    for (std::size_t k = 0; k < target.count(); ++k)
      predicted.push_back(assemble_object(vars.layout, k, model.templ().mesh, vars.offsets[k]).world_mesh());
    std::vector<InstanceIdMap> id_maps;
    for (const GtView* view : target.views) id_maps.push_back(rasterize_instance_ids(predicted, view->camera, raster));
    for (std::size_t k = 0; k < target.count(); ++k) {
      if (loss.match.pred_to_gt[k] < 0) continue;
      const auto j = static_cast<std::size_t>(loss.match.pred_to_gt[k]);
      const Mesh& world = predicted[k];
      double l1 = 0.0, iou = 0.0, gated = 0.0, inst = 0.0;
      std::size_t views = 0, gated_views = 0;
      for (std::size_t p = 0; p < target.views.size(); ++p) {
        const GtView* view = target.views[p];
        if (!view->boxes[j]) continue;
        ++views;
        inst += mask_iou(id_maps[p].mask_of(static_cast<int>(k)), view->masks[j]);
        const Projection proj = project(world.vertices, view->camera);
        l1 += proj.valid_count ? box_l1(box_from_projection(proj), *view->boxes[j]) : 1.0;
        const SilhouetteMap sil = rasterize_silhouette(world, view->camera, raster);
        const double v = mask_iou(threshold(sil.values, raster.width, raster.height), view->masks[j]);
        iou += v;
        if (v > 0.5) {
          gated += v;
          ++gated_views;
        }
      }
      if (views == 0) continue;
      ++out.objects;
      out.box_l1 += l1 / static_cast<double>(views);
      out.silhouette_iou += iou / static_cast<double>(views);
      out.instance_iou += inst / static_cast<double>(views);
      if (gated_views) {
        out.gated_silhouette_iou += gated / static_cast<double>(gated_views);
        ++gated_objects;
      }
    }
  }
  if (out.objects) {
    out.box_l1 /= static_cast<double>(out.objects);
    out.silhouette_iou /= static_cast<double>(out.objects);
    out.instance_iou /= static_cast<double>(out.objects);
    out.gated_coverage = static_cast<double>(gated_objects) / static_cast<double>(out.objects);
  }
  if (gated_objects) out.gated_silhouette_iou /= static_cast<double>(gated_objects);
  out.completeness_accuracy = static_cast<double>(correct) / static_cast<double>(predictions);
  return out;
}

}  // namespace sceneprior
