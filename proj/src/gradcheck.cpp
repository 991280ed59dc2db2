#include "sceneprior/gradcheck.hpp"

#include <algorithm>
#include <limits>
#include <chrono>
#include <functional>
#include <memory>

#include "sceneprior/training.hpp"

namespace sceneprior {

using ad::ParamTensor;
using ad::Tape;
using ad::Var;

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed(); });
}

double GradcheckReport::max_error(const std::string& subsystem) const {
  double worst = 0.0;
  for (const auto& e : entries)
    if (e.subsystem == subsystem) worst = std::max(worst, e.max_rel_error);
  return worst;
}

nlohmann::json to_json(const GradcheckReport& r) {
  nlohmann::json checks = nlohmann::json::array();
  std::vector<std::string> subsystems;
  for (const auto& e : r.entries) {
    checks.push_back({{"subsystem", e.subsystem},
                      {"name", e.name},
                      {"max_rel_error", e.max_rel_error},
                      {"tolerance", e.tolerance},
                      {"points", e.points},
                      {"skipped", e.skipped},
                      {"passed", e.passed()}});
    if (std::find(subsystems.begin(), subsystems.end(), e.subsystem) == subsystems.end())
      subsystems.push_back(e.subsystem);
  }
  nlohmann::json worst = nlohmann::json::object();
  for (const auto& s : subsystems) worst[s] = r.max_error(s);
  return {{"passed", r.passed()}, {"seconds", r.seconds}, {"max_rel_error", worst},
          {"checks", checks}};
}

namespace {

constexpr double kPrimitiveEps = 1e-3;
constexpr double kCompositeEps = 1e-4;
constexpr double kPrimitiveTol = 1e-6;
constexpr double kCompositeTol = 1e-4;
constexpr double kRendererTol = 1e-3;
constexpr double kSilhouetteEps = 1e-5;

struct ProbeOptions {
  double eps = kCompositeEps;
  double tol = kCompositeTol;
  double floor = 1e-8;            // lower bound of the relative-error denominator
  double floor_of_gmax = 0.0;     // extra floor as a fraction of max |gradient|
  std::size_t coords = 0;         // per tensor, 0 = all
  std::uint64_t seed = 0;
  bool skip_nonsmooth = true;
};

struct ProbeResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Compares tape gradients with a Richardson-extrapolated five-point
// difference, (16 D(h/2) - D(h)) / 15. The relative-error denominator is
// floored at the round-off level of that estimate over the tolerance, so
// gradients below what finite differences can resolve are compared
// absolutely. Where D(h) and D(h/2) disagree by more than the tolerance the
// stencil straddles a kink or jump, and the coordinate is skipped when
// allowed.
ProbeResult probe(const ad::ScalarFn& f, const std::vector<ParamTensor*>& xs, const ProbeOptions& o) {
  std::vector<std::vector<double>> grads;
  double fval = 0.0;
  for (ParamTensor* p : xs) p->zero_grad();
  {
    Tape t;
    Var loss = f(t);
    fval = loss.item();
    t.backward(loss);
  }
  double gmax = 0.0;
  for (ParamTensor* p : xs) {
    grads.push_back(p->grad);
    for (double g : p->grad) gmax = std::max(gmax, std::abs(g));
  }
  const double noise = 8.0 * std::abs(fval) * std::numeric_limits<double>::epsilon() / o.eps;
  const double floor = std::max({o.floor, noise / o.tol, o.floor_of_gmax * gmax});

  Rng rng(o.seed);
  ProbeResult r;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    ParamTensor& p = *xs[k];
    std::vector<std::size_t> ids(p.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    if (o.coords > 0 && ids.size() > o.coords) {
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(o.coords);
      std::sort(ids.begin(), ids.end());
    }
    for (std::size_t i : ids) {
      const double orig = p.values[i];
      auto at = [&](double step) {
        p.values[i] = orig + step;
        Tape t;
        return f(t).item();
      };
      auto five_point = [&](double h) {
        const double m2 = at(-2 * h), m1 = at(-h), p1 = at(h), p2 = at(2 * h);
        return ((m2 - p2) + 8.0 * (p1 - m1)) / (12.0 * h);
      };
      const double d1 = five_point(o.eps), d2 = five_point(o.eps / 2);
      p.values[i] = orig;
      if (o.skip_nonsmooth &&
          std::abs(d1 - d2) > o.tol * std::max({std::abs(d1), std::abs(d2), floor})) {
        ++r.skipped;
        continue;
      }
      const double fd = (16.0 * d2 - d1) / 15.0;
      r.max_rel_error = std::max(r.max_rel_error, ad::relative_error(grads[k][i], fd, floor));
      ++r.checked;
    }
  }
  for (std::size_t k = 0; k < xs.size(); ++k) xs[k]->grad = std::move(grads[k]);
  return r;
}

GradcheckEntry make_entry(const std::string& subsystem, const std::string& name, double tol,
                          const ProbeResult& r) {
  GradcheckEntry e{subsystem, name, r.max_rel_error, tol, r.checked};
  e.skipped = r.skipped;
  return e;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Random value in [lo, hi] at least `gap` away from zero; keeps kinks of
// relu/abs out of the finite-difference stencil.
double away_from_zero(Rng& rng, double lo, double hi, double gap = 1e-3) {
  for (;;) {
    const double v = uniform(rng, lo, hi);
    if (std::abs(v) > gap) return v;
  }
}

struct Input {
  std::vector<std::unique_ptr<ParamTensor>> tensors;

  ParamTensor& add(std::size_t rows, std::size_t cols, const std::function<double()>& draw) {
    tensors.push_back(std::make_unique<ParamTensor>("x" + std::to_string(tensors.size()),
                                                    ad::Shape{rows, cols}));
    for (double& v : tensors.back()->values) v = draw();
    return *tensors.back();
  }
  std::vector<ParamTensor*> ptrs() const {
    std::vector<ParamTensor*> out;
    for (const auto& t : tensors) out.push_back(t.get());
    return out;
  }
};

// Reduces a non-scalar output to a scalar with fixed random weights so every
// output coordinate contributes a distinct amount.
Var weighted_sum(Var out, const std::vector<double>& w) {
  Tape& t = out.tape();
  return ad::sum(ad::mul(out, t.constant(out.rows(), out.cols(), w)));
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;
using Sampler = std::function<void(Rng&, Input&)>;

GradcheckEntry check_primitive(const std::string& name, std::size_t points, Rng& rng,
                               const Sampler& sample, const Builder& build) {
  GradcheckEntry entry{"primitive", name, 0.0, kPrimitiveTol, points};
  for (std::size_t p = 0; p < points; ++p) {
    Input in;
    sample(rng, in);
    std::vector<double> w;
    {
      Tape t;
      std::vector<Var> xs;
      for (const auto& x : in.tensors) xs.push_back(t.param(*x));
      const Var out = build(t, xs);
      w.resize(out.size());
      for (double& v : w) v = away_from_zero(rng, -2.0, 2.0, 0.5);
    }
    auto f = [&](Tape& t) {
      std::vector<Var> xs;
      for (const auto& x : in.tensors) xs.push_back(t.param(*x));
      const Var out = build(t, xs);
      return out.size() == 1 ? out : weighted_sum(out, w);
    };
    ProbeOptions o;
    o.eps = kPrimitiveEps;
    o.tol = kPrimitiveTol;
    o.skip_nonsmooth = false;
    entry.max_rel_error = std::max(entry.max_rel_error, probe(f, in.ptrs(), o).max_rel_error);
  }
  return entry;
}

Sampler dense(std::vector<std::pair<std::size_t, std::size_t>> shapes, double lo = -2,
              double hi = 2) {
  return [shapes, lo, hi](Rng& rng, Input& in) {
    for (auto [r, c] : shapes) in.add(r, c, [&] { return uniform(rng, lo, hi); });
  };
}

void primitive_checks(std::size_t n, Rng& rng, std::vector<GradcheckEntry>& out) {
  auto unary = [&](const std::string& name, Var (*op)(Var), Sampler s) {
    out.push_back(check_primitive(name, n, rng, s, [op](Tape&, const auto& x) { return op(x[0]); }));
  };
  auto binary = [&](const std::string& name, Var (*op)(Var, Var), Sampler s) {
    out.push_back(
        check_primitive(name, n, rng, s, [op](Tape&, const auto& x) { return op(x[0], x[1]); }));
  };
  const Sampler kinked = [](Rng& rng, Input& in) {
    in.add(3, 4, [&] { return away_from_zero(rng, -2, 2, 1e-2); });
  };
  const Sampler positive = dense({{3, 4}}, 0.2, 3.0);

  binary("matmul", ad::matmul, dense({{3, 4}, {4, 2}}));
  binary("matmul_nt", ad::matmul_nt, dense({{3, 4}, {5, 4}}));
  unary("transpose", ad::transpose, dense({{3, 4}}));
  binary("add", ad::add, dense({{3, 4}, {3, 4}}));
  binary("add_row_broadcast", ad::add, dense({{3, 4}, {1, 4}}));
  binary("sub_col_broadcast", ad::sub, dense({{3, 4}, {3, 1}}));
  binary("mul", ad::mul, dense({{3, 4}, {3, 4}}));
  binary("mul_scalar_broadcast", ad::mul, dense({{3, 4}, {1, 1}}));
  out.push_back(check_primitive("div", n, rng,
                                [](Rng& rng, Input& in) {
                                  in.add(3, 4, [&] { return uniform(rng, -2, 2); });
                                  in.add(3, 4, [&] { return away_from_zero(rng, -2, 2, 0.5); });
                                },
                                [](Tape&, const auto& x) { return ad::div(x[0], x[1]); }));
  out.push_back(check_primitive("scale", n, rng, dense({{3, 4}}),
                                [](Tape&, const auto& x) { return ad::scale(x[0], -1.7); }));
  out.push_back(check_primitive("add_scalar", n, rng, dense({{3, 4}}),
                                [](Tape&, const auto& x) { return ad::add_scalar(x[0], 0.3); }));
  unary("neg", ad::neg, dense({{3, 4}}));
  unary("relu", ad::relu, kinked);
  unary("gelu", ad::gelu, dense({{3, 4}}, -3, 3));
  unary("softplus", ad::softplus, dense({{3, 4}}, -4, 4));
  unary("sigmoid", ad::sigmoid, dense({{3, 4}}, -4, 4));
  unary("exp", ad::exp, dense({{3, 4}}));
  unary("log", ad::log, positive);
  unary("sqrt", ad::sqrt, positive);
  unary("square", ad::square, dense({{3, 4}}));
  unary("abs", ad::abs, kinked);
  unary("softmax_rows", ad::softmax_rows, dense({{3, 5}}, -1, 1));
  unary("log_softmax_rows", ad::log_softmax_rows, dense({{3, 5}}, -3, 3));
  unary("sum", ad::sum, dense({{3, 4}}));
  unary("mean", ad::mean, dense({{3, 4}}));
  unary("sum_rows", ad::sum_rows, dense({{3, 4}}));
  out.push_back(check_primitive("concat_cols", n, rng, dense({{3, 2}, {3, 3}}),
                                [](Tape&, const auto& x) { return ad::concat_cols({x[0], x[1]}); }));
  out.push_back(check_primitive("concat_rows", n, rng, dense({{2, 3}, {1, 3}}),
                                [](Tape&, const auto& x) { return ad::concat_rows({x[0], x[1]}); }));
  out.push_back(check_primitive("slice_cols", n, rng, dense({{3, 5}}),
                                [](Tape&, const auto& x) { return ad::slice_cols(x[0], 1, 3); }));
  out.push_back(check_primitive("slice_rows", n, rng, dense({{4, 3}}),
                                [](Tape&, const auto& x) { return ad::slice_rows(x[0], 1, 2); }));
  out.push_back(check_primitive("tile_rows", n, rng, dense({{1, 4}}),
                                [](Tape&, const auto& x) { return ad::tile_rows(x[0], 3); }));
  out.push_back(check_primitive(
      "layer_norm_rows", n, rng,
      [](Rng& rng, Input& in) {
        in.add(3, 6, [&] { return uniform(rng, -2, 2); });
        in.add(1, 6, [&] { return uniform(rng, 0.5, 1.5); });
        in.add(1, 6, [&] { return uniform(rng, -0.5, 0.5); });
      },
      [](Tape&, const auto& x) { return ad::layer_norm_rows(x[0], x[1], x[2]); }));
  out.push_back(check_primitive(
      "l1_distance", n, rng,
      [](Rng& rng, Input& in) {
        ParamTensor& a = in.add(3, 4, [&] { return uniform(rng, -2, 2); });
        std::vector<double> base = a.values;
        std::size_t i = 0;
        in.add(3, 4, [&] { return base[i++] + away_from_zero(rng, -1, 1, 1e-2); });
      },
      [](Tape&, const auto& x) { return ad::l1_distance(x[0], x[1]); }));
  out.push_back(check_primitive("cross_entropy_logits", n, rng, dense({{1, 6}}, -3, 3),
                                [](Tape&, const auto& x) { return ad::cross_entropy_logits(x[0], 2); }));
  static const std::vector<double> targets{1, 0, 0.3, 1, 0, 0.8, 0, 1, 1, 0.5, 0, 1};
  out.push_back(check_primitive("bce", n, rng, dense({{3, 4}}, 0.05, 0.95),
                                [](Tape&, const auto& x) { return ad::bce(x[0], targets); }));
  out.push_back(check_primitive("bce_with_logits", n, rng, dense({{3, 4}}, -4, 4),
                                [](Tape&, const auto& x) { return ad::bce_with_logits(x[0], targets); }));
  unary("normalize", ad::normalize, dense({{1, 6}}));
  binary("cosine_similarity", ad::cosine_similarity, dense({{1, 3}, {1, 3}}));
}

// ---- composites -------------------------------------------------------------

struct Fixture {
  Dataset data;
  std::unique_ptr<Model> model;
  RasterConfig raster;
  LossWeights weights;
};

Fixture make_fixture(std::uint64_t seed) {
  DatasetSpec spec;
  spec.scenes = 1;
  spec.min_objects = 2;
  spec.max_objects = 3;
  spec.views = 6;
  spec.image_size = 32;
  spec.seed = seed + 7;
  Fixture fx;
  fx.data = generate_dataset(spec);
  ModelConfig mc;
  mc.generator = GeneratorConfig{16, 2, 32, 4, true};
  mc.decoder.trunk = {32, 16};
  mc.decoder.shape_hidden = {32, 16};
  mc.anchors = 32;
  mc.subdivisions = 1;
  mc.num_scenes = 1;
  mc.seed = seed + 1;
  fx.model = std::make_unique<Model>(mc);
  // Nonzero offsets, so the shape path is exercised away from its init.
  Rng rng(derive_seed(seed, 41));
  for (ParamTensor* p : fx.model->shape_params())
    for (double& v : p->values) v += uniform(rng, -0.05, 0.05);
  fx.raster.width = fx.raster.height = 32;
  return fx;
}

GradcheckEntry composite(const std::string& name, const ad::ScalarFn& f,
                         const std::vector<ParamTensor*>& xs, std::size_t coords,
                         std::uint64_t seed, double eps = kCompositeEps) {
  ProbeOptions o;
  o.eps = eps;
  o.coords = coords;
  o.seed = seed;
  o.floor = 1e-6;
  return make_entry("composite", name, kCompositeTol, probe(f, xs, o));
}

void composite_checks(std::uint64_t seed, std::vector<GradcheckEntry>& out) {
  Rng rng(derive_seed(seed, 40));

  {
    AnchorSet anchors = init_anchors(16, 8, derive_seed(seed, 42));
    ParamTensor u("u", {1, 16});
    u.values = gaussian_vector(rng, 16);
    std::vector<double> target = gaussian_vector(rng, 8);
    auto f = [&](Tape& t) {
      Var z = compose_latent(t.param(u), anchors);
      return ad::sum(ad::square(ad::sub(z, t.constant(1, 8, target))));
    };
    out.push_back(composite("latent_composition", f, {&u}, 0, seed));
  }

  Fixture fx = make_fixture(seed);
  Model& m = *fx.model;
  const std::size_t d = m.config().generator.d_model;

  {
    ParamTensor z("z", {1, d});
    z.values = gaussian_vector(rng, d);
    auto f = [&](Tape& t) {
      auto xs = m.generator().rollout(t.param(z), 3);
      return ad::sum(ad::square(xs.back()));
    };
    std::vector<ParamTensor*> ps = m.store().with_prefix("gen.");
    ps.push_back(&z);
    out.push_back(composite("generator_rollout", f, ps, 4, seed));
  }

  {
    ParamTensor z("z", {1, d});
    z.values = gaussian_vector(rng, d);
    auto f = [&](Tape& t) {
      SceneVars sv = m.decode(t.param(z), 2, true);
      return ad::mean(ad::square(sv.offsets[1]));
    };
    // Many ReLU pre-activations per vertex; f is O(1e-4), so a short step
    // keeps round-off low while rarely straddling a kink.
    out.push_back(composite("shape_offsets", f, m.shape_params(), 6, seed, 1e-6));
  }

  SceneTarget target = make_target(fx.data.scenes[0], {0, 2, 4});
  for (int stage = 1; stage <= 2; ++stage) {
    auto f = [&](Tape& t) {
      Var z = compose_latent(t.param(m.embedding(0)), m.anchors());
      return compute_scene_loss(m, z, target, stage == 2, fx.weights, fx.raster).total;
    };
    out.push_back(composite(stage == 1 ? "layout_loss" : "total_loss", f, m.store().all(),
                            stage == 1 ? 4 : 2, seed + static_cast<std::uint64_t>(stage)));
  }

  {
    // Latent logits of a single-object view, as fitted by reconstruction.
    const SceneRecord& rec = fx.data.scenes[0];
    GtView view;
    view.camera = rec.views[0].camera;
    std::vector<int> labels;
    for (std::size_t j = 0; j < rec.scene.objects.size() && labels.empty(); ++j)
      if (rec.views[0].boxes[j]) {
        view.boxes.push_back(rec.views[0].boxes[j]);
        view.masks.push_back(rec.views[0].masks[j]);
        labels.push_back(rec.scene.objects[j].label);
      }
    SceneTarget one{labels, {&view}};
    LossWeights w = fx.weights;
    w.completeness = 0.0;
    ParamTensor u("u", {1, m.anchors().count()});
    Rng urng(derive_seed(seed, 43));
    u.values = gaussian_vector(urng, u.size());
    auto f = [&](Tape& t) {
      Var z = compose_latent(t.param(u), m.anchors());
      return compute_scene_loss(m, z, one, true, w, fx.raster).total;
    };
    out.push_back(composite("reconstruction_logits", f, {&u}, 0, seed));
  }
}

void renderer_checks(std::uint64_t seed, std::vector<GradcheckEntry>& out) {
  Rng rng(derive_seed(seed, 50));
  const Camera cam = look_at({0.3, 1.2, 3.0}, {0, 0, 0}, {0, 1, 0}, 0.9, 32, 32);

  {
    ParamTensor x("x", {5, 3});
    for (double& v : x.values) v = uniform(rng, -0.8, 0.8);
    std::vector<double> w(10);
    for (double& v : w) v = uniform(rng, 0.5, 1.5);
    auto f = [&](Tape& t) { return weighted_sum(project(t.param(x), cam).uv, w); };
    ProbeOptions o;
    o.eps = kPrimitiveEps;
    o.tol = kPrimitiveTol;
    o.skip_nonsmooth = false;
    out.push_back(make_entry("geometry", "projection", kPrimitiveTol, probe(f, {&x}, o)));
  }

  const Mesh sphere = make_icosphere(1).mesh;
  ParamTensor v("v", {sphere.vertices.size(), 3});
  for (std::size_t i = 0; i < sphere.vertices.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k)
      v.values[i * 3 + k] = 0.7 * sphere.vertices[i][k] + uniform(rng, -0.02, 0.02);
  RasterConfig rc;
  rc.width = rc.height = 32;
  // With sharp blending most vertices sit away from the silhouette edge and
  // carry gradients near 1e-15; those are held to an absolute error instead.
  ProbeOptions ro;
  ro.eps = kSilhouetteEps;
  ro.tol = kRendererTol;
  ro.floor_of_gmax = 1e-3;
  {
    auto f = [&](Tape& t) {
      return ad::sum(rasterize_silhouette(project(t.param(v), cam), sphere.faces, rc).occupancy);
    };
    out.push_back(make_entry("renderer", "silhouette_sum", kRendererTol, probe(f, {&v}, ro)));
  }
  {
    std::vector<double> mask(32 * 32);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const std::size_t r = i / 32, c = i % 32;
      mask[i] = (r > 10 && r < 20 && c > 12 && c < 22) ? 1.0 : 0.0;
    }
    auto f = [&](Tape& t) {
      return ad::bce(rasterize_silhouette(project(t.param(v), cam), sphere.faces, rc).occupancy,
                     mask);
    };
    out.push_back(make_entry("renderer", "silhouette_bce", kRendererTol, probe(f, {&v}, ro)));
  }
}

}  // namespace

GradcheckReport run_gradcheck_suite(const GradcheckOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;
  Rng rng(derive_seed(options.seed, 30));
  primitive_checks(options.primitive_points, rng, report.entries);
  composite_checks(options.seed, report.entries);
  renderer_checks(options.seed, report.entries);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace sceneprior
