#pragma once

// Layout and shape decoders. A shared trunk MLP feeds a layout head (class
// logits, center, size, completeness) and a pointwise shape network that
// predicts per-vertex offsets of the template sphere.

#include <vector>

#include <json.hpp>

#include "sceneprior/nn.hpp"
#include "sceneprior/scene.hpp"

namespace sceneprior {

struct DecoderConfig {
  std::size_t num_classes = 6;  // includes void at index 0
  std::vector<std::size_t> trunk{128, 64};
  std::vector<std::size_t> shape_hidden{128, 64};

  void validate() const;
  static DecoderConfig full_scale(std::size_t num_classes);
};

nlohmann::json to_json(const DecoderConfig& c);
DecoderConfig decoder_config_from_json(const nlohmann::json& j);

// Layout of k objects, one row each.
struct LayoutVars {
  ad::Var trunk;         // k x trunk_out
  ad::Var logits;        // k x N_c
  ad::Var center;        // k x 3, vertical coordinate already lifted
  ad::Var size;          // k x 3, > 0
  ad::Var completeness;  // k x 1 probability
  ad::Var completeness_logit;

  std::size_t count() const { return logits.rows(); }
};

class Decoders {
 public:
  Decoders(const DecoderConfig& config, std::size_t d_model, ParamStore& store, Rng& rng);

  const DecoderConfig& config() const { return config_; }

  // features: k x d_model.
  LayoutVars decode_layout(ad::Var features) const;
  // Offsets (|V| x 3) for object `row` of the layout. When `enabled` is false
  // the offsets are exactly zero and no shape parameters enter the tape.
  ad::Var decode_shape(const LayoutVars& layout, std::size_t row, const Mesh& templ,
                       bool enabled) const;
  // World-frame vertices (|V| x 3) of object `row`:
  // (template + offsets) * size / 2 + center.
  ad::Var world_vertices(const LayoutVars& layout, std::size_t row, const Mesh& templ,
                         ad::Var offsets) const;

  const Mlp& shape_network() const { return shape_; }

 private:
  DecoderConfig config_;
  Mlp trunk_;
  Linear head_;
  Mlp shape_;
};

// Index of the largest value, ties resolved toward the lower index.
std::size_t argmax(std::span<const double> values);

ObjectInstance assemble_object(const LayoutVars& layout, std::size_t row, const Mesh& templ,
                               ad::Var offsets);

}  // namespace sceneprior
