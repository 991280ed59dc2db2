#pragma once

// The full scene prior: anchors, generator, decoders, template sphere and
// one latent-logit vector per training scene, all under one ParamStore.

#include <filesystem>
#include <memory>

#include "sceneprior/decoders.hpp"
#include "sceneprior/generator.hpp"
#include "sceneprior/latent.hpp"
#include "sceneprior/renderer.hpp"

namespace sceneprior {

struct ModelConfig {
  GeneratorConfig generator;
  DecoderConfig decoder;
  std::vector<std::string> categories{"void", "bed", "table", "chair", "cabinet", "lamp"};
  std::size_t anchors = 256;
  int subdivisions = kDefaultSubdivisions;
  std::size_t num_scenes = 0;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Decoded rollout of one latent vector, still on the tape.
struct SceneVars {
  LayoutVars layout;
  std::vector<ad::Var> offsets;  // one |V| x 3 per object
};

class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const AnchorSet& anchors() const { return anchors_; }
  const TemplateSphere& templ() const { return templ_; }
  const Generator& generator() const { return *generator_; }
  const Decoders& decoders() const { return *decoders_; }
  CategoryTable categories() const { return CategoryTable(config_.categories); }

  ad::ParamTensor& embedding(std::size_t scene) const;
  // Network parameters only (no embeddings).
  std::vector<ad::ParamTensor*> network_params() const;
  std::vector<ad::ParamTensor*> shape_params() const;

  // Rolls out `steps` objects from a 1 x D latent and decodes them.
  SceneVars decode(ad::Var latent, std::size_t steps, bool shape_enabled) const;
  // Full rollout, truncation at the first completeness < 0.5 (exclusive) and
  // removal of void-labeled objects.
  Scene decode_scene(const LatentVector& z, bool shape_enabled = true) const;
  // First `count` decoded objects, without truncation or void removal.
  Scene decode_first(const LatentVector& z, std::size_t count, bool shape_enabled = true) const;
  // Latent vector of a training scene's embedding.
  LatentVector scene_latent(std::size_t scene) const;

 private:
  ModelConfig config_;
  ParamStore store_;
  AnchorSet anchors_;
  TemplateSphere templ_;
  std::unique_ptr<Generator> generator_;
  std::unique_ptr<Decoders> decoders_;
  std::vector<ad::ParamTensor*> embeddings_;
};

// Checkpoint = binary tensors at `path` plus the model config at path + ".json".
void save_model(const std::filesystem::path& path, const Model& model,
                const std::vector<NamedTensor>& extra = {});
std::unique_ptr<Model> load_model(const std::filesystem::path& path,
                                  std::vector<NamedTensor>* all_tensors = nullptr);
std::filesystem::path config_path(const std::filesystem::path& checkpoint);

}  // namespace sceneprior
