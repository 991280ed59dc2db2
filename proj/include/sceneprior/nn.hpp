#pragma once

// Parameter storage and the small layer set the generator and decoders are
// built from.

#include <memory>
#include <string>
#include <vector>

#include "sceneprior/autodiff.hpp"
#include "sceneprior/checkpoint.hpp"
#include "sceneprior/rng.hpp"

namespace sceneprior {

// Owns named parameters with stable addresses, in registration order.
class ParamStore {
 public:
  ad::ParamTensor& add(const std::string& name, ad::Shape shape);
  ad::ParamTensor& get(const std::string& name);
  const ad::ParamTensor& get(const std::string& name) const;

  std::vector<ad::ParamTensor*> all() const;
  std::vector<ad::ParamTensor*> with_prefix(const std::string& prefix) const;
  std::size_t parameter_count() const;

  std::vector<NamedTensor> snapshot() const;
  void load(const std::vector<NamedTensor>& tensors);
  void zero_grad();

 private:
  std::vector<std::unique_ptr<ad::ParamTensor>> params_;
};

// Uniform in +-1/sqrt(fan_in).
void init_uniform_fan_in(ad::ParamTensor& p, std::size_t fan_in, Rng& rng);

// y = x W + b with W stored in x out.
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  ad::Var forward(ad::Var x) const;
  std::size_t in() const { return weight_->shape[0]; }
  std::size_t out() const { return weight_->shape[1]; }
  ad::ParamTensor& weight() const { return *weight_; }
  ad::ParamTensor& bias() const { return *bias_; }

 private:
  ad::ParamTensor* weight_ = nullptr;
  ad::ParamTensor* bias_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, std::size_t dim);
  ad::Var forward(ad::Var x) const;

 private:
  ad::ParamTensor* gamma_ = nullptr;
  ad::ParamTensor* beta_ = nullptr;
};

// Stack of Linear layers with ReLU between them (none after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, const std::vector<std::size_t>& widths, Rng& rng);
  ad::Var forward(ad::Var x) const;
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
};

// Scaled dot-product multi-head attention without positional encoding.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, std::size_t d_model,
                     std::size_t heads, Rng& rng);

  // queries: q x d, keys_values: k x d -> q x d. When `weights` is given it
  // receives one q x k attention matrix per head.
  ad::Var forward(ad::Var queries, ad::Var keys_values,
                  std::vector<ad::Var>* weights = nullptr) const;
  // The output projection applied to the value projection alone, i.e. what
  // attention over a single key returns.
  ad::Var value_path(ad::Var keys_values) const;

 private:
  std::size_t heads_ = 1;
  Linear q_, k_, v_, o_;
};

}  // namespace sceneprior
