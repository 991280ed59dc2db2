#include <doctest.h>

#include <cmath>

#include "sceneprior/decoders.hpp"

using namespace sceneprior;

namespace {

struct Fixture {
  ParamStore store;
  Rng rng{3};
  Decoders dec{DecoderConfig{4, {16, 8}, {16, 8}}, 12, store, rng};
  Mesh templ = make_icosphere(1).mesh;
};

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  return gaussian_vector(r, n);
}

}  // namespace

TEST_CASE("layout head ranges") {
  Fixture f;
  ad::Tape t;
  LayoutVars l = f.dec.decode_layout(t.constant(5, 12, gaussian(60, 1)));
  CHECK(l.count() == 5);
  CHECK(l.logits.cols() == 4);
  for (std::size_t k = 0; k < 5; ++k) {
    for (int a = 0; a < 3; ++a) CHECK(l.size.at(k, a) > 0.0);
    // Lifted so the box never goes below the floor.
    CHECK(l.center.at(k, 1) - l.size.at(k, 1) / 2 >= -1e-15);
    CHECK(l.completeness.at(k, 0) > 0.0);
    CHECK(l.completeness.at(k, 0) < 1.0);
  }
}

TEST_CASE("disabled shape decoding is exactly zero and leaves shape grads alone") {
  Fixture f;
  f.store.zero_grad();
  ad::Tape t;
  LayoutVars l = f.dec.decode_layout(t.constant(2, 12, gaussian(24, 2)));
  ad::Var off = f.dec.decode_shape(l, 1, f.templ, false);
  for (double v : off.value()) CHECK(v == 0.0);
  ad::Var w = f.dec.world_vertices(l, 1, f.templ, off);
  t.backward(ad::sum(ad::square(w)));
  const auto shape_params = f.store.with_prefix("dec.shape");
  REQUIRE_FALSE(shape_params.empty());
  for (ad::ParamTensor* p : shape_params)
    for (double g : p->grad) CHECK(g == 0.0);
}

TEST_CASE("world vertices follow (template + offsets) * size / 2 + center") {
  Fixture f;
  ad::Tape t;
  LayoutVars l = f.dec.decode_layout(t.constant(2, 12, gaussian(24, 3)));
  ad::Var off = f.dec.decode_shape(l, 0, f.templ, true);
  ad::Var w = f.dec.world_vertices(l, 0, f.templ, off);
  REQUIRE(w.rows() == f.templ.vertices.size());
  for (std::size_t i = 0; i < f.templ.vertices.size(); ++i)
    for (std::size_t a = 0; a < 3; ++a) {
      const double expected =
          (f.templ.vertices[i][a] + off.at(i, a)) * l.size.at(0, a) / 2 + l.center.at(0, a);
      CHECK(w.at(i, a) == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("shape network sees every template vertex") {
  Fixture f;
  ad::Tape t;
  LayoutVars l = f.dec.decode_layout(t.constant(1, 12, gaussian(12, 4)));
  ad::Var off = f.dec.decode_shape(l, 0, f.templ, true);
  CHECK(off.rows() == f.templ.vertices.size());
  CHECK(off.cols() == 3);
}

TEST_CASE("argmax breaks ties toward the lower index") {
  CHECK(argmax(std::vector<double>{0.1, 0.7, 0.7}) == 1);
  CHECK(argmax(std::vector<double>{-1, -2}) == 0);
}

TEST_CASE("assembled object matches the layout row") {
  Fixture f;
  ad::Tape t;
  LayoutVars l = f.dec.decode_layout(t.constant(2, 12, gaussian(24, 5)));
  ad::Var off = f.dec.decode_shape(l, 1, f.templ, false);
  ObjectInstance o = assemble_object(l, 1, f.templ, off);
  CHECK(o.label == static_cast<int>(argmax(std::vector<double>(
                       l.logits.value().begin() + 4, l.logits.value().begin() + 8))));
  for (int a = 0; a < 3; ++a) {
    CHECK(o.center[a] == l.center.at(1, a));
    CHECK(o.size[a] == l.size.at(1, a));
  }
  CHECK(o.mesh.vertices == f.templ.vertices);
}

TEST_CASE("decoder config validation and json") {
  DecoderConfig c{1, {8}, {8}};
  CHECK_THROWS_AS(c.validate(), Error);
  c.num_classes = 6;
  DecoderConfig r = decoder_config_from_json(to_json(c));
  CHECK(r.num_classes == 6);
  CHECK(r.trunk == std::vector<std::size_t>{8});
}
