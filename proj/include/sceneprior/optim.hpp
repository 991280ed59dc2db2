#pragma once

#include <cstdint>
#include <vector>

#include "sceneprior/autodiff.hpp"
#include "sceneprior/checkpoint.hpp"

namespace sceneprior {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer with bias correction. Parameters with
// requires_grad == false are skipped.
class Adam {
 public:
  Adam(std::vector<ad::ParamTensor*> params, AdamOptions options = {});

  void step(double lr);
  void zero_grad();
  std::uint64_t steps() const { return steps_; }

  // Moments and step count as named tensors ("adam.m/<param>", ...).
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& tensors);

 private:
  std::vector<ad::ParamTensor*> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

struct RmsPropOptions {
  double alpha = 0.99;
  double eps = 1e-8;
};

class RmsProp {
 public:
  RmsProp(std::vector<ad::ParamTensor*> params, RmsPropOptions options = {});

  void step(double lr);
  void zero_grad();

 private:
  std::vector<ad::ParamTensor*> params_;
  RmsPropOptions options_;
  std::vector<std::vector<double>> sq_;
};

// Single-milestone step decay over 0-based epochs: `base` before the
// milestone, `base * factor` from epoch == milestone on.
double step_decay_lr(double base, double factor, std::int64_t milestone, std::int64_t epoch);

}  // namespace sceneprior
