#pragma once

// Permutation-invariant autoregressive transformer. A single self-attention
// encoder layer turns the features generated so far (start token first) into
// an unordered scene context; a single cross-attention decoder layer queries
// that context with the latent vector to produce the next object feature.
// Neither layer uses positional encoding.

#include <vector>

#include <json.hpp>

#include "sceneprior/nn.hpp"

namespace sceneprior {

struct GeneratorConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 128;
  std::size_t max_objects = 6;
  bool layer_norm = true;

  void validate() const;
  static GeneratorConfig full_scale(std::size_t max_objects);
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

class Generator {
 public:
  Generator(const GeneratorConfig& config, ParamStore& store, Rng& rng);

  const GeneratorConfig& config() const { return config_; }

  ad::Var start_token(ad::Tape& tape) const;
  // features: k x d (k >= 1) -> context k x d, rows permutation-equivariant.
  ad::Var encode_context(ad::Var features) const;
  // context: k x d, latent: 1 x d -> next feature 1 x d.
  ad::Var decode_next(ad::Var context, ad::Var latent,
                      std::vector<ad::Var>* attention = nullptr) const;
  // Returns x_0 .. x_steps (steps + 1 rows).
  std::vector<ad::Var> rollout(ad::Var latent, std::size_t steps) const;

  const MultiHeadAttention& cross_attention() const { return cross_attn_; }

 private:
  ad::Var feed_forward(const Linear& a, const Linear& b, ad::Var x) const;
  ad::Var maybe_norm(const LayerNorm& ln, ad::Var x) const;

  GeneratorConfig config_;
  ad::ParamTensor* start_ = nullptr;
  LayerNorm enc_ln_attn_, enc_ln_ffn_;
  MultiHeadAttention self_attn_;
  Linear enc_ffn1_, enc_ffn2_;
  LayerNorm dec_ln_query_, dec_ln_context_, dec_ln_ffn_;
  MultiHeadAttention cross_attn_;
  Linear dec_ffn1_, dec_ffn2_;
};

}  // namespace sceneprior
