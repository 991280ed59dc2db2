#pragma once

// Hypersphere latent space: a latent vector is the normalized convex
// combination of M fixed unit anchors, with the convex weights given by a
// softmax over free logits.

#include <cstdint>
#include <span>
#include <vector>

#include "sceneprior/autodiff.hpp"

namespace sceneprior {

using LatentVector = std::vector<double>;

class AnchorSet {
 public:
  AnchorSet() = default;
  AnchorSet(std::size_t count, std::size_t dim, std::vector<double> anchors);

  std::size_t count() const { return count_; }
  std::size_t dim() const { return dim_; }
  // Row-major count x dim.
  std::span<const double> data() const { return anchors_; }
  std::span<const double> anchor(std::size_t i) const {
    return std::span<const double>(anchors_).subspan(i * dim_, dim_);
  }

 private:
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> anchors_;
};

// Normalized Gaussian draws; deterministic in seed.
AnchorSet init_anchors(std::size_t count, std::size_t dim, std::uint64_t seed);

// Convex weights over the anchors, stored as free logits.
struct WeightSimplex {
  std::vector<double> logits;

  std::vector<double> weights() const;
};

LatentVector compose_latent(const AnchorSet& anchors, std::span<const double> weights);
inline LatentVector compose_latent(const AnchorSet& anchors, const WeightSimplex& simplex) {
  return compose_latent(anchors, simplex.weights());
}
// Differentiable in the logits (1 x M); anchors enter as a constant.
ad::Var compose_latent(ad::Var logits, const AnchorSet& anchors);

std::vector<double> random_logits(std::size_t count, std::uint64_t seed);
LatentVector random_latent(const AnchorSet& anchors, std::uint64_t seed);

// Great-circle interpolation; near-parallel inputs fall back to a
// normalized linear blend, antipodal inputs are rejected.
LatentVector slerp(std::span<const double> a, std::span<const double> b, double t);

double l2_norm(std::span<const double> v);

}  // namespace sceneprior
