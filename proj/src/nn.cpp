#include "sceneprior/nn.hpp"

#include <cmath>

namespace sceneprior {

ad::ParamTensor& ParamStore::add(const std::string& name, ad::Shape shape) {
  for (const auto& p : params_)
    if (p->name == name) throw Error("duplicate-param", "parameter " + name + " registered twice");
  params_.push_back(std::make_unique<ad::ParamTensor>(name, std::move(shape)));
  return *params_.back();
}

ad::ParamTensor& ParamStore::get(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw Error("missing-param", "no parameter named " + name);
}

const ad::ParamTensor& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw Error("missing-param", "no parameter named " + name);
}

std::vector<ad::ParamTensor*> ParamStore::all() const {
  std::vector<ad::ParamTensor*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<ad::ParamTensor*> ParamStore::with_prefix(const std::string& prefix) const {
  std::vector<ad::ParamTensor*> out;
  for (const auto& p : params_)
    if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

std::vector<NamedTensor> ParamStore::snapshot() const {
  std::vector<NamedTensor> out;
  for (const auto& p : params_) out.push_back(sceneprior::snapshot(*p));
  return out;
}

void ParamStore::load(const std::vector<NamedTensor>& tensors) {
  for (auto& p : params_) restore(*p, find_tensor(tensors, p->name));
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void init_uniform_fan_in(ad::ParamTensor& p, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.values) v = dist(rng);
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight_(&store.add(name + ".weight", {in, out})), bias_(&store.add(name + ".bias", {out})) {
  init_uniform_fan_in(*weight_, in, rng);
  init_uniform_fan_in(*bias_, in, rng);
}

ad::Var Linear::forward(ad::Var x) const {
  ad::Tape& t = x.tape();
  return ad::add(ad::matmul(x, t.param(*weight_)), t.param(*bias_));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::size_t dim)
    : gamma_(&store.add(name + ".gamma", {dim})), beta_(&store.add(name + ".beta", {dim})) {
  std::fill(gamma_->values.begin(), gamma_->values.end(), 1.0);
}

ad::Var LayerNorm::forward(ad::Var x) const {
  ad::Tape& t = x.tape();
  return ad::layer_norm_rows(x, t.param(*gamma_), t.param(*beta_));
}

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw Error("bad-config", "MLP " + name + " needs at least two widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    layers_.emplace_back(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
}

ad::Var Mlp::forward(ad::Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(x);
    if (i + 1 < layers_.size()) x = ad::relu(x);
  }
  return x;
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name,
                                       std::size_t d_model, std::size_t heads, Rng& rng)
    : heads_(heads),
      q_(store, name + ".q", d_model, d_model, rng),
      k_(store, name + ".k", d_model, d_model, rng),
      v_(store, name + ".v", d_model, d_model, rng),
      o_(store, name + ".o", d_model, d_model, rng) {
  if (heads == 0 || d_model % heads != 0)
    throw Error("bad-config", "d_model " + std::to_string(d_model) + " not divisible by " +
                                  std::to_string(heads) + " heads");
}

ad::Var MultiHeadAttention::forward(ad::Var queries, ad::Var keys_values,
                                    std::vector<ad::Var>* weights) const {
  const std::size_t d = q_.out();
  const std::size_t dh = d / heads_;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  ad::Var q = q_.forward(queries);
  ad::Var k = k_.forward(keys_values);
  ad::Var v = v_.forward(keys_values);
  std::vector<ad::Var> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    ad::Var qh = ad::slice_cols(q, h * dh, dh);
    ad::Var kh = ad::slice_cols(k, h * dh, dh);
    ad::Var vh = ad::slice_cols(v, h * dh, dh);
    ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_scale));
    if (weights) weights->push_back(attn);
    heads.push_back(ad::matmul(attn, vh));
  }
  return o_.forward(heads_ == 1 ? heads[0] : ad::concat_cols(heads));
}

ad::Var MultiHeadAttention::value_path(ad::Var keys_values) const {
  return o_.forward(v_.forward(keys_values));
}

}  // namespace sceneprior
