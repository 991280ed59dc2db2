// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// writes the measured values to <work-dir>/acceptance.json.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "sceneprior/gradcheck.hpp"
#include "sceneprior/tasks.hpp"

namespace fs = std::filesystem;
using namespace sceneprior;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool passed = false;
  std::string detail;
  json values = json::object();
};

struct Runner {
  json report = json::object();
  int failures = 0;

  template <class F>
  void run(int id, const std::string& title, F&& body) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    if (!o.passed) ++failures;
    std::printf("criterion %2d %s  %-34s %s  (%.1f s)\n", id, o.passed ? "PASS" : "FAIL",
                title.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    o.values["passed"] = o.passed;
    o.values["seconds"] = secs;
    o.values["title"] = title;
    report[std::to_string(id)] = o.values;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1 ----------------------------------------------------------------------

Outcome gradient_suite() {
  GradcheckOptions opt;
  opt.primitive_points = 100;
  const GradcheckReport r = run_gradcheck_suite(opt);
  Outcome o;
  o.values = to_json(r);
  std::string failed;
  for (const auto& e : r.entries)
    if (!e.passed()) failed += " " + e.name;
  const double prim = r.max_error("primitive"), comp = r.max_error("composite"),
               rend = r.max_error("renderer"), geom = r.max_error("geometry");
  o.passed = r.passed() && prim < 1e-6 && geom < 1e-6 && comp < 1e-4 && rend < 1e-3 &&
             r.seconds < 120.0;
  o.detail = "primitive " + fmt("%.1e", prim) + " composite " + fmt("%.1e", comp) +
             " silhouette " + fmt("%.1e", rend) + (failed.empty() ? "" : " failed:" + failed);
  return o;
}

// ---- 2 ----------------------------------------------------------------------

Outcome permutation_invariance() {
  ParamStore store;
  Rng init(17);
  const GeneratorConfig config;
  const Generator gen(config, store, init);
  const std::size_t d = config.d_model;
  const AnchorSet anchors = init_anchors(64, d, 3);
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + static_cast<std::size_t>(rng() % 8);
    const auto feats = gaussian_vector(rng, k * d);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> permuted(k * d);
    for (std::size_t i = 0; i < k; ++i)
      std::copy_n(feats.begin() + static_cast<std::ptrdiff_t>(perm[i] * d), d,
                  permuted.begin() + static_cast<std::ptrdiff_t>(i * d));
    ad::Tape t;
    const ad::Var z = t.constant(1, d, random_latent(anchors, static_cast<std::uint64_t>(trial)));
    const auto a = gen.decode_next(gen.encode_context(t.constant(k, d, feats)), z).to_vector();
    const auto b = gen.decode_next(gen.encode_context(t.constant(k, d, permuted)), z).to_vector();
    for (std::size_t c = 0; c < a.size(); ++c) worst = std::max(worst, std::abs(a[c] - b[c]));
  }
  Outcome o;
  o.passed = worst < 1e-9;
  o.detail = "max abs diff " + fmt("%.2e", worst) + " over 100 sets, k <= 8";
  o.values["max_abs_diff"] = worst;
  return o;
}

// ---- 3 ----------------------------------------------------------------------

Outcome hungarian_oracle() {
  Rng rng(99);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const std::size_t n = 7;
  std::size_t mismatches = 0;
  double worst_total_gap = 0.0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 200; ++trial) {
    CostMatrix c{n, n, std::vector<double>(n * n)};
    for (auto& v : c.values) v = u(rng);
    // Both sides summed in row order so equal assignments give equal doubles.
    auto cost_of = [&](const std::vector<int>& col) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += c.at(r, static_cast<std::size_t>(col[r]));
      return s;
    };
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do best = std::min(best, cost_of(perm));
    while (std::next_permutation(perm.begin(), perm.end()));
    const MatchAssignment m = hungarian(c);
    if (cost_of(m.pred_to_gt) != best) ++mismatches;
    worst_total_gap = std::max(worst_total_gap, std::abs(m.total_cost - best));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.passed = mismatches == 0 && secs < 10.0;
  o.detail = std::to_string(mismatches) + " of 200 differ from brute force, reported total within " +
             fmt("%.1e", worst_total_gap);
  o.values["mismatches"] = mismatches;
  o.values["max_reported_total_gap"] = worst_total_gap;
  return o;
}

// ---- 4 ----------------------------------------------------------------------

Outcome latent_invariants() {
  const std::size_t m = 256, d = 64;
  const AnchorSet anchors = init_anchors(m, d, 1);
  double worst_norm = 0.0;
  for (std::uint64_t s = 0; s < 10000; ++s)
    worst_norm = std::max(worst_norm, std::abs(l2_norm(random_latent(anchors, s)) - 1.0));

  bool one_hot_exact = true;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> w(m, 0.0);
    w[i] = 1.0;
    const LatentVector z = compose_latent(anchors, w);
    const auto a = anchors.anchor(i);
    one_hot_exact = one_hot_exact && std::equal(z.begin(), z.end(), a.begin(), a.end());
  }

  double worst_slerp = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const LatentVector a = random_latent(anchors, 2 * s), b = random_latent(anchors, 2 * s + 1);
    const LatentVector z0 = slerp(a, b, 0.0), z1 = slerp(a, b, 1.0);
    for (std::size_t c = 0; c < d; ++c)
      worst_slerp = std::max({worst_slerp, std::abs(z0[c] - a[c]), std::abs(z1[c] - b[c])});
  }
  Outcome o;
  o.passed = worst_norm <= 1e-12 && one_hot_exact && worst_slerp <= 1e-12;
  o.detail = "norm dev " + fmt("%.1e", worst_norm) + ", one-hot " +
             (one_hot_exact ? "exact" : "inexact") + ", slerp ends " + fmt("%.1e", worst_slerp);
  o.values["max_norm_deviation"] = worst_norm;
  o.values["one_hot_exact"] = one_hot_exact;
  o.values["max_slerp_endpoint_error"] = worst_slerp;
  return o;
}

// ---- 5, 6, 7 ----------------------------------------------------------------

struct Trained {
  Dataset data;
  TrainConfig config;
  RasterConfig raster;
  std::unique_ptr<Trainer> trainer;
};

Outcome two_stage(Trained& tr, const fs::path& work) {
  tr.data = generate_dataset(DatasetSpec{});
  tr.raster = tr.config.raster;
  tr.raster.width = tr.data.width;
  tr.raster.height = tr.data.height;
  tr.trainer = std::make_unique<Trainer>(tr.data, tr.config);
  std::ofstream log(work / "train_log.csv");
  write_metrics_header(log);

  const auto t0 = Clock::now();
  tr.trainer->run(tr.config.stage1_epochs, &log);
  const double stage1_secs = seconds_since(t0);
  const EvalReport s1 = evaluate_model(tr.trainer->model(), tr.data, tr.config.weights, tr.raster, false);
  tr.trainer->run(tr.config.total_epochs(), &log);
  const double secs = seconds_since(t0);
  const EvalReport s2 = evaluate_model(tr.trainer->model(), tr.data, tr.config.weights, tr.raster);
  tr.trainer->save(work / "model.bin");

  Outcome o;
  o.passed = s1.box_l1 < 0.05 && s1.completeness_accuracy > 0.95 &&
             s2.gated_silhouette_iou > 0.6 && secs < 45 * 60;
  o.detail = "box L1 " + fmt("%.4f", s1.box_l1) + ", completeness " +
             fmt("%.3f", s1.completeness_accuracy) + ", gated IoU " +
             fmt("%.3f", s2.gated_silhouette_iou);
  o.values["stage1"] = to_json(s1);
  o.values["stage2"] = to_json(s2);
  o.values["stage1_seconds"] = stage1_secs;
  o.values["train_seconds"] = secs;
  o.values["train_config"] = to_json(tr.config);
  return o;
}

Outcome reconstruction(const Trained& tr) {
  if (!tr.trainer) throw Error("no-model", "training did not complete");
  ReconstructConfig rc;
  rc.raster = tr.raster;
  const MetricsReport r = evaluate_reconstruction(tr.trainer->model(), tr.data, 8, rc);
  Outcome o;
  o.passed = r.pairs > 0 && r.box_iou >= 0.3 && r.chamfer <= 0.15;
  o.detail = "3D box IoU " + fmt("%.3f", r.box_iou) + ", chamfer " + fmt("%.3f", r.chamfer) +
             " over 8 views";
  o.values = to_json(r);
  return o;
}

Outcome synthesis_kl(const Trained& tr) {
  if (!tr.trainer) throw Error("no-model", "training did not complete");
  std::vector<Scene> synth, gt;
  for (std::uint64_t s = 0; s < 1000; ++s) synth.push_back(synthesize(tr.trainer->model(), s));
  for (const auto& rec : tr.data.scenes) gt.push_back(rec.scene);
  const std::size_t nc = tr.data.categories.size();
  const auto p = category_histogram(synth, nc), q = category_histogram(gt, nc);
  const double kl = category_kl(p, q);
  Outcome o;
  o.passed = kl < 0.1;
  o.detail = "KL " + fmt("%.4f", kl) + " over 1000 scenes";
  o.values["kl"] = kl;
  o.values["synth_histogram"] = p;
  o.values["train_histogram"] = q;
  return o;
}

// ---- 8 ----------------------------------------------------------------------

Outcome retrieval_self() {
  const CategoryTable table(ModelConfig{}.categories);
  const RetrievalLibrary lib = default_library(table);
  std::size_t self_ok = 0, rot_checked = 0, rot_ok = 0, symmetric = 0;
  json per_entry = json::array();
  for (const LibraryEntry& e : lib.entries) {
    auto query = [&](int q) {
      ObjectInstance o;
      o.label = e.label;
      o.size = {0.7, 0.8, 0.5};
      o.center = {0.2, 1.5, -0.3};  // above the extrusion height, so the box is used as is
      o.mesh = fit_unit_box(rotate_yaw(e.mesh, q));
      return retrieve_shape(o, lib);
    };
    const RetrievalResult r0 = query(0), r1 = query(1);
    const bool self = r0.entry == &e && r0.rotation_degrees == 0 && r0.chamfer < 1e-9;
    // A mesh that maps onto itself under a quarter turn cannot tell 0 from 90;
    // there the tie-break picks 0 and only the distance is checked.
    const bool quarter_symmetric =
        chamfer_distance(sample_surface(fit_unit_box(rotate_yaw(e.mesh, 1)), 512, 1),
                         sample_surface(e.mesh, 512, 1)) < 1e-9;
    bool rot;
    if (quarter_symmetric) {
      ++symmetric;
      rot = r1.entry == &e && r1.chamfer < 1e-9;
    } else {
      ++rot_checked;
      rot = r1.entry == &e && r1.rotation_degrees == 90 && r1.chamfer < 1e-9;
      if (rot) ++rot_ok;
    }
    if (self) ++self_ok;
    per_entry.push_back({{"name", e.name}, {"self_rotation", r0.rotation_degrees},
                         {"self_chamfer", r0.chamfer}, {"quarter_symmetric", quarter_symmetric},
                         {"rotated_rotation", r1.rotation_degrees}, {"rotated_chamfer", r1.chamfer},
                         {"rotated_ok", rot}});
  }
  bool all_rot = true;
  for (const auto& p : per_entry) all_rot = all_rot && p["rotated_ok"].get<bool>();
  Outcome o;
  o.passed = self_ok == lib.entries.size() && all_rot && rot_checked > 0;
  o.detail = std::to_string(self_ok) + "/" + std::to_string(lib.entries.size()) + " self, " +
             std::to_string(rot_ok) + "/" + std::to_string(rot_checked) + " at 90 (" +
             std::to_string(symmetric) + " quarter-symmetric)";
  o.values["entries"] = per_entry;
  return o;
}

// ---- 9 ----------------------------------------------------------------------

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("io", "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void shell(const std::string& cmd) {
  if (std::system(cmd.c_str()) != 0) throw Error("cli", "command failed: " + cmd);
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

Outcome determinism(const fs::path& cli, const fs::path& work) {
  if (cli.empty()) throw Error("usage", "--cli not given");
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  for (const char* run : {"run_a", "run_b"}) {
    const fs::path dir = work / run;
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string exe = quoted(cli);
    const std::string quiet = " > " + quoted(dir / "stdout.txt");
    shell(exe + " gen-data --out " + quoted(dir / "data") + quiet);
    shell(exe + " train --data " + quoted(dir / "data") + " --out " + quoted(dir / "ck.bin") + quiet);
    for (auto s : seeds)
      shell(exe + " synthesize --ckpt " + quoted(dir / "ck.bin") + " --seed " + std::to_string(s) +
            " --out " + quoted(dir / ("synth_" + std::to_string(s) + ".json")));
  }
  std::vector<fs::path> files{"ck.bin", "ck.bin.json"};
  for (auto s : seeds) files.push_back("synth_" + std::to_string(s) + ".json");
  for (const auto& entry : fs::recursive_directory_iterator(work / "run_a" / "data"))
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), work / "run_a"));
  std::vector<std::string> differing;
  for (const auto& f : files)
    if (read_bytes(work / "run_a" / f) != read_bytes(work / "run_b" / f))
      differing.push_back(f.string());
  Outcome o;
  o.passed = differing.empty();
  o.detail = std::to_string(files.size() - differing.size()) + "/" + std::to_string(files.size()) +
             " files bit-identical";
  o.values["files"] = files.size();
  o.values["differing"] = differing;
  return o;
}

// ---- 10 ---------------------------------------------------------------------

Outcome metric_units() {
  const std::vector<double> p{0.0, 0.3, 0.2, 0.5};
  const double kl = category_kl(p, p);
  const double iou = box_iou_3d({0, 0, 0}, {1, 1, 1}, {0.5, 0, 0}, {1, 1, 1});
  const auto pts = sample_surface(make_box_mesh(), 1024, 5);
  auto shuffled = pts;
  std::shuffle(shuffled.begin(), shuffled.end(), Rng(8));
  const double cd = chamfer_distance(pts, shuffled);
  Outcome o;
  o.passed = kl == 0.0 && iou == 1.0 / 3.0 && cd == 0.0;
  o.detail = "KL(p||p) " + fmt("%g", kl) + ", IoU " + fmt("%.17g", iou) + ", chamfer " + fmt("%g", cd);
  o.values["kl_self"] = kl;
  o.values["iou_offset_cubes"] = iou;
  o.values["chamfer_self"] = cd;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run"};
  std::string work_dir = "acceptance_work", cli;
  std::vector<int> only;
  app.add_option("--work-dir", work_dir);
  app.add_option("--cli", cli, "sceneprior executable for the pipeline determinism run");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path work(work_dir);
  fs::create_directories(work);
  auto wanted = [&](int id) { return only.empty() || std::count(only.begin(), only.end(), id) > 0; };

  const auto t0 = Clock::now();
  Runner r;
  Trained trained;
  if (wanted(1)) r.run(1, "gradient suite", gradient_suite);
  if (wanted(2)) r.run(2, "permutation invariance", permutation_invariance);
  if (wanted(3)) r.run(3, "hungarian vs brute force", hungarian_oracle);
  if (wanted(4)) r.run(4, "latent invariants", latent_invariants);
  if (wanted(5) || wanted(6) || wanted(7)) {
    r.run(5, "two-stage overfit", [&] { return two_stage(trained, work); });
    if (wanted(6)) r.run(6, "single-view reconstruction", [&] { return reconstruction(trained); });
    if (wanted(7)) r.run(7, "synthesis category KL", [&] { return synthesis_kl(trained); });
  }
  if (wanted(8)) r.run(8, "shape retrieval self-consistency", retrieval_self);
  if (wanted(9)) r.run(9, "pipeline determinism", [&] { return determinism(cli, work); });
  if (wanted(10)) r.run(10, "metric unit checks", metric_units);

  r.report["seconds"] = seconds_since(t0);
  r.report["failures"] = r.failures;
  write_text_file(work / "acceptance.json", dump_json(r.report));
  std::printf("%s: %d failing, %.1f s total\n", r.failures == 0 ? "ALL PASS" : "FAILURES",
              r.failures, seconds_since(t0));
  return r.failures == 0 ? 0 : 1;
}
