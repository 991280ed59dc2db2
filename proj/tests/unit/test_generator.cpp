#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sceneprior/generator.hpp"

using namespace sceneprior;

namespace {

struct Fixture {
  ParamStore store;
  Rng rng{5};
  Generator gen{GeneratorConfig{16, 4, 32, 6, true}, store, rng};
};

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  return gaussian_vector(r, n);
}

}  // namespace

TEST_CASE("config validation and json") {
  GeneratorConfig c{16, 3, 32, 6, true};
  CHECK_THROWS_AS(c.validate(), Error);
  c.heads = 4;
  CHECK_NOTHROW(c.validate());
  GeneratorConfig r = generator_config_from_json(to_json(c));
  CHECK(r.d_model == 16);
  CHECK(r.heads == 4);
  CHECK(r.layer_norm);
  CHECK(GeneratorConfig::full_scale(7).d_model == 512);
}

TEST_CASE("context encoding is permutation equivariant and the next feature invariant") {
  Fixture f;
  const std::size_t k = 5, d = 16;
  const auto feats = gaussian(k * d, 1);
  const auto z = gaussian(d, 2);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> permuted(k * d);
  for (std::size_t i = 0; i < k; ++i)
    std::copy_n(feats.begin() + perm[i] * d, d, permuted.begin() + i * d);

  ad::Tape t;
  ad::Var ctx = f.gen.encode_context(t.constant(k, d, feats));
  ad::Var ctx_p = f.gen.encode_context(t.constant(k, d, permuted));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = 0; c < d; ++c) CHECK(std::abs(ctx_p.at(i, c) - ctx.at(perm[i], c)) < 1e-12);
  ad::Var latent = t.constant(1, d, z);
  auto a = f.gen.decode_next(ctx, latent).to_vector();
  auto b = f.gen.decode_next(ctx_p, latent).to_vector();
  for (std::size_t c = 0; c < d; ++c) CHECK(std::abs(a[c] - b[c]) < 1e-12);
}

TEST_CASE("attention weights are row-stochastic") {
  Fixture f;
  ad::Tape t;
  ad::Var ctx = f.gen.encode_context(t.constant(3, 16, gaussian(48, 3)));
  std::vector<ad::Var> att;
  f.gen.decode_next(ctx, t.constant(1, 16, gaussian(16, 4)), &att);
  CHECK(att.size() == 4);
  for (const ad::Var& a : att) {
    CHECK(a.rows() == 1);
    CHECK(a.cols() == 3);
    const auto v = a.to_vector();
    CHECK(std::accumulate(v.begin(), v.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("attention over one key returns the value path") {
  ParamStore store;
  Rng rng(8);
  MultiHeadAttention mha(store, "mha", 8, 2, rng);
  ad::Tape t;
  ad::Var kv = t.constant(1, 8, gaussian(8, 9));
  auto a = mha.forward(t.constant(1, 8, gaussian(8, 10)), kv).to_vector();
  auto b = mha.value_path(kv).to_vector();
  for (std::size_t i = 0; i < 8; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("rollout returns the start token plus one row per step") {
  Fixture f;
  ad::Tape t;
  auto rows = f.gen.rollout(t.constant(1, 16, gaussian(16, 6)), 4);
  CHECK(rows.size() == 5);
  const auto start = f.gen.start_token(t).to_vector();
  CHECK(rows[0].to_vector() == start);
  for (const auto& r : rows) {
    CHECK(r.rows() == 1);
    CHECK(r.cols() == 16);
  }
  // Different latents give different objects.
  ad::Tape t2;
  auto other = f.gen.rollout(t2.constant(1, 16, gaussian(16, 7)), 4);
  CHECK(other[1].to_vector() != rows[1].to_vector());
}

TEST_CASE("construction is deterministic in the rng seed") {
  Fixture a, b;
  CHECK(a.store.snapshot().size() == b.store.snapshot().size());
  for (std::size_t i = 0; i < a.store.all().size(); ++i)
    CHECK(a.store.all()[i]->values == b.store.all()[i]->values);
}

TEST_CASE("layer norm can be switched off") {
  ParamStore store;
  Rng rng(1);
  Generator g(GeneratorConfig{8, 2, 16, 3, false}, store, rng);
  ad::Tape t;
  CHECK(g.rollout(t.constant(1, 8, gaussian(8, 1)), 2).size() == 3);
}
