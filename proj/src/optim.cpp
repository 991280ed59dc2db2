#include "sceneprior/optim.hpp"

#include <cmath>

namespace sceneprior {

Adam::Adam(std::vector<ad::ParamTensor*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::ParamTensor& p = *params_[k];
    if (!p.requires_grad) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.values[i] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

std::vector<NamedTensor> Adam::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.push_back({"adam.m/" + params_[k]->name, params_[k]->shape, m_[k]});
    out.push_back({"adam.v/" + params_[k]->name, params_[k]->shape, v_[k]});
  }
  out.push_back({"adam.steps", {1}, {static_cast<double>(steps_)}});
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& tensors) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& m = find_tensor(tensors, "adam.m/" + params_[k]->name);
    const auto& v = find_tensor(tensors, "adam.v/" + params_[k]->name);
    if (m.values.size() != m_[k].size() || v.values.size() != v_[k].size())
      throw Error("shape-mismatch", "optimizer state for " + params_[k]->name);
    m_[k] = m.values;
    v_[k] = v.values;
  }
  steps_ = static_cast<std::uint64_t>(find_tensor(tensors, "adam.steps").values.at(0));
}

RmsProp::RmsProp(std::vector<ad::ParamTensor*> params, RmsPropOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto* p : params_) sq_.emplace_back(p->size(), 0.0);
}

void RmsProp::step(double lr) {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::ParamTensor& p = *params_[k];
    if (!p.requires_grad) continue;
    auto& sq = sq_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      sq[i] = options_.alpha * sq[i] + (1.0 - options_.alpha) * g * g;
      p.values[i] -= lr * g / (std::sqrt(sq[i]) + options_.eps);
    }
  }
}

void RmsProp::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double step_decay_lr(double base, double factor, std::int64_t milestone, std::int64_t epoch) {
  if (milestone <= 0) return base;
  return epoch >= milestone ? base * factor : base;
}

}  // namespace sceneprior
