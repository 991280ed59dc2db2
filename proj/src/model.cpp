#include "sceneprior/model.hpp"

namespace sceneprior {

void ModelConfig::validate() const {
  generator.validate();
  decoder.validate();
  if (categories.size() != decoder.num_classes)
    throw Error("bad-config", "category table has " + std::to_string(categories.size()) +
                                  " entries but the decoder predicts " +
                                  std::to_string(decoder.num_classes) + " classes");
  CategoryTable check(categories);
  if (anchors < 2) throw Error("bad-config", "need at least 2 anchors");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"generator", to_json(c.generator)}, {"decoder", to_json(c.decoder)},
          {"categories", c.categories},       {"anchors", c.anchors},
          {"subdivisions", c.subdivisions},   {"num_scenes", c.num_scenes},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("generator")) c.generator = generator_config_from_json(j["generator"]);
  if (j.contains("categories")) c.categories = j["categories"].get<std::vector<std::string>>();
  c.decoder.num_classes = c.categories.size();
  if (j.contains("decoder")) c.decoder = decoder_config_from_json(j["decoder"]);
  c.anchors = j.value("anchors", c.anchors);
  c.subdivisions = j.value("subdivisions", c.subdivisions);
  c.num_scenes = j.value("num_scenes", c.num_scenes);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  anchors_ = init_anchors(config_.anchors, config_.generator.d_model, derive_seed(config_.seed, 1));
  templ_ = make_icosphere(config_.subdivisions);
  Rng rng(derive_seed(config_.seed, 2));
  generator_ = std::make_unique<Generator>(config_.generator, store_, rng);
  decoders_ = std::make_unique<Decoders>(config_.decoder, config_.generator.d_model, store_, rng);
  for (std::size_t s = 0; s < config_.num_scenes; ++s) {
    auto& e = store_.add("embed." + std::to_string(s), {1, config_.anchors});
    e.values = random_logits(config_.anchors, derive_seed(config_.seed, 3, s));
    embeddings_.push_back(&e);
  }
}

ad::ParamTensor& Model::embedding(std::size_t scene) const {
  if (scene >= embeddings_.size())
    throw Error("out-of-range", "scene " + std::to_string(scene) + " has no embedding");
  return *embeddings_[scene];
}

std::vector<ad::ParamTensor*> Model::network_params() const {
  std::vector<ad::ParamTensor*> out;
  for (auto* p : store_.all())
    if (p->name.rfind("embed.", 0) != 0) out.push_back(p);
  return out;
}

std::vector<ad::ParamTensor*> Model::shape_params() const { return store_.with_prefix("dec.shape"); }

SceneVars Model::decode(ad::Var latent, std::size_t steps, bool shape_enabled) const {
  std::vector<ad::Var> seq = generator_->rollout(latent, steps);
  seq.erase(seq.begin());
  SceneVars out;
  if (seq.empty()) return out;
  out.layout = decoders_->decode_layout(ad::concat_rows(seq));
  for (std::size_t k = 0; k < steps; ++k)
    out.offsets.push_back(decoders_->decode_shape(out.layout, k, templ_.mesh, shape_enabled));
  return out;
}

Scene Model::decode_first(const LatentVector& z, std::size_t count, bool shape_enabled) const {
  ad::Tape tape;
  SceneVars vars = decode(tape.constant(1, z.size(), z), count, shape_enabled);
  Scene scene;
  scene.categories = categories();
  for (std::size_t k = 0; k < count; ++k)
    scene.objects.push_back(assemble_object(vars.layout, k, templ_.mesh, vars.offsets[k]));
  return scene;
}

Scene Model::decode_scene(const LatentVector& z, bool shape_enabled) const {
  ad::Tape tape;
  const std::size_t n = config_.generator.max_objects;
  SceneVars vars = decode(tape.constant(1, z.size(), z), n, shape_enabled);
  Scene scene;
  scene.categories = categories();
  for (std::size_t k = 0; k < n; ++k) {
    if (vars.layout.completeness.at(k, 0) < 0.5) break;
    ObjectInstance obj = assemble_object(vars.layout, k, templ_.mesh, vars.offsets[k]);
    if (obj.label != kVoidLabel) scene.objects.push_back(std::move(obj));
  }
  return scene;
}

LatentVector Model::scene_latent(std::size_t scene) const {
  return compose_latent(anchors_, WeightSimplex{embedding(scene).values});
}

std::filesystem::path config_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".json";
}

void save_model(const std::filesystem::path& path, const Model& model,
                const std::vector<NamedTensor>& extra) {
  std::vector<NamedTensor> tensors = model.store().snapshot();
  tensors.insert(tensors.end(), extra.begin(), extra.end());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_tensors(path, tensors);
  write_text_file(config_path(path), dump_json(to_json(model.config())));
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path,
                                  std::vector<NamedTensor>* all_tensors) {
  ModelConfig config = model_config_from_json(read_json_file(config_path(path)));
  auto model = std::make_unique<Model>(config);
  std::vector<NamedTensor> tensors = read_tensors(path);
  model->store().load(tensors);
  if (all_tensors) *all_tensors = std::move(tensors);
  return model;
}

}  // namespace sceneprior
