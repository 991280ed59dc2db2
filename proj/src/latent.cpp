#include "sceneprior/latent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sceneprior/rng.hpp"

namespace sceneprior {

namespace {

constexpr double kDegenerateNorm = 1e-10;
constexpr double kParallelAngle = 1e-6;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

AnchorSet::AnchorSet(std::size_t count, std::size_t dim, std::vector<double> anchors)
    : count_(count), dim_(dim), anchors_(std::move(anchors)) {
  if (anchors_.size() != count_ * dim_)
    throw Error("shape-mismatch", "anchor buffer does not match count x dim");
}

AnchorSet init_anchors(std::size_t count, std::size_t dim, std::uint64_t seed) {
  if (count < 2 || dim < 2)
    throw Error("bad-config", "anchor set needs M >= 2 and D_z >= 2 (got M=" +
                                  std::to_string(count) + ", D_z=" + std::to_string(dim) + ")");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> data(count * dim);
  for (std::size_t i = 0; i < count; ++i) {
    std::span<double> row(data.data() + i * dim, dim);
    // Renormalize until the norm evaluates to exactly 1, so that a one-hot
    // composition reproduces the anchor bit for bit. Some draws cycle in the
    // last bit instead; those are redrawn.
    double n = 0.0;
    do {
      do {
        for (double& v : row) v = normal(rng);
        n = l2_norm(row);
      } while (n < 1e-12);
      for (int pass = 0; pass < 8 && n != 1.0; ++pass) {
        for (double& v : row) v /= n;
        n = l2_norm(row);
      }
    } while (n != 1.0);
  }
  return AnchorSet(count, dim, std::move(data));
}

std::vector<double> WeightSimplex::weights() const {
  std::vector<double> w(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(logits[i] - mx);
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

LatentVector compose_latent(const AnchorSet& anchors, std::span<const double> weights) {
  if (weights.size() != anchors.count())
    throw Error("shape-mismatch", std::to_string(weights.size()) + " weights for " +
                                      std::to_string(anchors.count()) + " anchors");
  LatentVector z(anchors.dim(), 0.0);
  for (std::size_t i = 0; i < anchors.count(); ++i) {
    if (weights[i] == 0.0) continue;
    auto phi = anchors.anchor(i);
    for (std::size_t d = 0; d < z.size(); ++d) z[d] += weights[i] * phi[d];
  }
  const double n = l2_norm(z);
  if (n < kDegenerateNorm)
    throw Error("degenerate-combination", "weighted anchor sum has norm " + std::to_string(n));
  if (n != 1.0)
    for (double& v : z) v /= n;
  return z;
}

ad::Var compose_latent(ad::Var logits, const AnchorSet& anchors) {
  if (logits.rows() != 1 || logits.cols() != anchors.count())
    throw Error("shape-mismatch", "latent logits must be 1 x " + std::to_string(anchors.count()));
  ad::Tape& tape = logits.tape();
  ad::Var phi = tape.constant(anchors.count(), anchors.dim(),
                              std::vector<double>(anchors.data().begin(), anchors.data().end()));
  ad::Var combo = ad::matmul(ad::softmax_rows(logits), phi);
  const double n = l2_norm(combo.value());
  if (n < kDegenerateNorm)
    throw Error("degenerate-combination", "weighted anchor sum has norm " + std::to_string(n));
  return ad::normalize(combo);
}

std::vector<double> random_logits(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_vector(rng, count);
}

LatentVector random_latent(const AnchorSet& anchors, std::uint64_t seed) {
  WeightSimplex w{random_logits(anchors.count(), seed)};
  return compose_latent(anchors, w);
}

LatentVector slerp(std::span<const double> a, std::span<const double> b, double t) {
  if (a.size() != b.size()) throw Error("shape-mismatch", "slerp of vectors with different sizes");
  const double c = std::clamp(dot(a, b), -1.0, 1.0);
  const double omega = std::acos(c);
  if (omega > std::numbers::pi - kParallelAngle)
    throw Error("antipodal-latents", "slerp endpoints are antipodal; the geodesic is ambiguous");
  if (t == 0.0) return {a.begin(), a.end()};
  if (t == 1.0) return {b.begin(), b.end()};
  LatentVector out(a.size());
  if (omega < kParallelAngle) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - t) * a[i] + t * b[i];
  } else {
    const double s = std::sin(omega);
    const double wa = std::sin((1.0 - t) * omega) / s;
    const double wb = std::sin(t * omega) / s;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + wb * b[i];
  }
  const double n = l2_norm(out);
  for (double& v : out) v /= n;
  return out;
}

}  // namespace sceneprior
