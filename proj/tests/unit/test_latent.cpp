#include <doctest.h>

#include <cmath>

#include "sceneprior/latent.hpp"

using namespace sceneprior;

TEST_CASE("anchors are unit vectors and deterministic in the seed") {
  AnchorSet a = init_anchors(32, 16, 9);
  AnchorSet b = init_anchors(32, 16, 9);
  AnchorSet c = init_anchors(32, 16, 10);
  CHECK(std::vector<double>(a.data().begin(), a.data().end()) ==
        std::vector<double>(b.data().begin(), b.data().end()));
  CHECK(std::vector<double>(a.data().begin(), a.data().end()) !=
        std::vector<double>(c.data().begin(), c.data().end()));
  for (std::size_t i = 0; i < a.count(); ++i) CHECK(std::abs(l2_norm(a.anchor(i)) - 1.0) < 1e-12);
}

TEST_CASE("simplex weights are a probability vector") {
  WeightSimplex s{random_logits(64, 3)};
  double total = 0;
  for (double w : s.weights()) {
    CHECK(w > 0.0);
    total += w;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("composed latents lie on the sphere") {
  AnchorSet anchors = init_anchors(64, 24, 1);
  for (std::uint64_t s = 0; s < 200; ++s) CHECK(std::abs(l2_norm(random_latent(anchors, s)) - 1.0) < 1e-12);
}

TEST_CASE("one-hot weights give the anchor back") {
  AnchorSet anchors = init_anchors(256, 64, 2);
  for (std::size_t i = 0; i < anchors.count(); ++i) {
    std::vector<double> w(anchors.count(), 0.0);
    w[i] = 1.0;
    LatentVector z = compose_latent(anchors, w);
    for (std::size_t d = 0; d < anchors.dim(); ++d) CHECK(z[d] == anchors.anchor(i)[d]);
  }
}

TEST_CASE("taped composition matches the plain one") {
  AnchorSet anchors = init_anchors(16, 6, 4);
  const auto logits = random_logits(16, 5);
  ad::Tape t;
  ad::Var z = compose_latent(t.constant(1, 16, logits), anchors);
  const LatentVector ref = compose_latent(anchors, WeightSimplex{logits});
  for (std::size_t d = 0; d < 6; ++d) CHECK(z.value()[d] == doctest::Approx(ref[d]).epsilon(1e-14));
}

TEST_CASE("slerp endpoints, midpoint and norm") {
  AnchorSet anchors = init_anchors(16, 8, 6);
  LatentVector a = random_latent(anchors, 1), b = random_latent(anchors, 2);
  LatentVector s0 = slerp(a, b, 0.0), s1 = slerp(a, b, 1.0);
  for (std::size_t d = 0; d < a.size(); ++d) {
    CHECK(std::abs(s0[d] - a[d]) < 1e-12);
    CHECK(std::abs(s1[d] - b[d]) < 1e-12);
  }
  for (double t : {0.1, 0.5, 0.77}) CHECK(std::abs(l2_norm(slerp(a, b, t)) - 1.0) < 1e-12);
  // Midpoint is equidistant from both ends.
  LatentVector m = slerp(a, b, 0.5);
  double da = 0, db = 0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    da += m[d] * a[d];
    db += m[d] * b[d];
  }
  CHECK(da == doctest::Approx(db).epsilon(1e-12));
}

TEST_CASE("slerp between orthogonal vectors follows the circle") {
  const std::vector<double> a{1, 0, 0}, b{0, 1, 0};
  LatentVector m = slerp(a, b, 1.0 / 3.0);
  CHECK(m[0] == doctest::Approx(std::cos(M_PI / 6)).epsilon(1e-14));
  CHECK(m[1] == doctest::Approx(std::sin(M_PI / 6)).epsilon(1e-14));
}

TEST_CASE("slerp handles near-parallel inputs and rejects antipodes") {
  const std::vector<double> a{1, 0, 0}, b{1, 1e-12, 0};
  LatentVector m = slerp(a, b, 0.5);
  CHECK(std::isfinite(m[1]));
  CHECK(std::abs(l2_norm(m) - 1.0) < 1e-12);
  const std::vector<double> c{-1, 0, 0};
  CHECK_THROWS_AS(slerp(a, c, 0.5), Error);
}
