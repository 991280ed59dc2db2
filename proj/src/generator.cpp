#include "sceneprior/generator.hpp"

namespace sceneprior {

void GeneratorConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    throw Error("bad-config", "d_model must be a positive multiple of heads");
  if (max_objects < 1) throw Error("bad-config", "max_objects must be >= 1");
  if (ffn_hidden == 0) throw Error("bad-config", "ffn_hidden must be positive");
}

GeneratorConfig GeneratorConfig::full_scale(std::size_t max_objects) {
  return {512, 4, 1024, max_objects, true};
}

nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"d_model", c.d_model},       {"heads", c.heads},
          {"ffn_hidden", c.ffn_hidden}, {"max_objects", c.max_objects},
          {"layer_norm", c.layer_norm}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.max_objects = j.value("max_objects", c.max_objects);
  c.layer_norm = j.value("layer_norm", c.layer_norm);
  c.validate();
  return c;
}

Generator::Generator(const GeneratorConfig& config, ParamStore& store, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model;
  start_ = &store.add("gen.start_token", {1, d});
  init_uniform_fan_in(*start_, d, rng);
  enc_ln_attn_ = LayerNorm(store, "gen.enc.ln_attn", d);
  self_attn_ = MultiHeadAttention(store, "gen.enc.attn", d, config_.heads, rng);
  enc_ln_ffn_ = LayerNorm(store, "gen.enc.ln_ffn", d);
  enc_ffn1_ = Linear(store, "gen.enc.ffn1", d, config_.ffn_hidden, rng);
  enc_ffn2_ = Linear(store, "gen.enc.ffn2", config_.ffn_hidden, d, rng);
  dec_ln_query_ = LayerNorm(store, "gen.dec.ln_query", d);
  dec_ln_context_ = LayerNorm(store, "gen.dec.ln_context", d);
  cross_attn_ = MultiHeadAttention(store, "gen.dec.attn", d, config_.heads, rng);
  dec_ln_ffn_ = LayerNorm(store, "gen.dec.ln_ffn", d);
  dec_ffn1_ = Linear(store, "gen.dec.ffn1", d, config_.ffn_hidden, rng);
  dec_ffn2_ = Linear(store, "gen.dec.ffn2", config_.ffn_hidden, d, rng);
}

ad::Var Generator::start_token(ad::Tape& tape) const { return tape.param(*start_); }

ad::Var Generator::maybe_norm(const LayerNorm& ln, ad::Var x) const {
  return config_.layer_norm ? ln.forward(x) : x;
}

ad::Var Generator::feed_forward(const Linear& a, const Linear& b, ad::Var x) const {
  return b.forward(ad::gelu(a.forward(x)));
}

ad::Var Generator::encode_context(ad::Var features) const {
  if (features.rows() == 0) throw Error("empty-input", "encode_context needs the start token");
  if (features.cols() != config_.d_model)
    throw Error("shape-mismatch", "features have " + std::to_string(features.cols()) +
                                      " columns, d_model is " + std::to_string(config_.d_model));
  ad::Var normed = maybe_norm(enc_ln_attn_, features);
  ad::Var h = ad::add(features, self_attn_.forward(normed, normed));
  return ad::add(h, feed_forward(enc_ffn1_, enc_ffn2_, maybe_norm(enc_ln_ffn_, h)));
}

ad::Var Generator::decode_next(ad::Var context, ad::Var latent,
                               std::vector<ad::Var>* attention) const {
  if (latent.rows() != 1 || latent.cols() != config_.d_model)
    throw Error("shape-mismatch", "latent is " + std::to_string(latent.rows()) + "x" +
                                      std::to_string(latent.cols()) + ", expected 1x" +
                                      std::to_string(config_.d_model));
  if (context.rows() == 0 || context.cols() != config_.d_model)
    throw Error("shape-mismatch", "context must be k x d_model with k >= 1");
  ad::Var h = ad::add(latent, cross_attn_.forward(maybe_norm(dec_ln_query_, latent),
                                                  maybe_norm(dec_ln_context_, context), attention));
  return ad::add(h, feed_forward(dec_ffn1_, dec_ffn2_, maybe_norm(dec_ln_ffn_, h)));
}

std::vector<ad::Var> Generator::rollout(ad::Var latent, std::size_t steps) const {
  if (steps > config_.max_objects)
    throw Error("bad-config", "rollout of " + std::to_string(steps) + " steps exceeds max_objects " +
                                  std::to_string(config_.max_objects));
  std::vector<ad::Var> seq{start_token(latent.tape())};
  for (std::size_t k = 1; k <= steps; ++k)
    seq.push_back(decode_next(encode_context(ad::concat_rows(seq)), latent));
  return seq;
}

}  // namespace sceneprior
