#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sceneprior/gradcheck.hpp"
#include "sceneprior/shapes.hpp"
#include "sceneprior/tasks.hpp"

namespace fs = std::filesystem;
using namespace sceneprior;
using nlohmann::json;

namespace {

// A latent file holds either the vector itself ([...] or {"z": [...]}), a
// training scene's embedding ({"scene": i}) or a random draw ({"seed": k}).
LatentVector read_latent(const fs::path& path, const Model& model) {
  const json j = read_json_file(path);
  const std::size_t d = model.config().generator.d_model;
  if (j.is_object() && j.contains("scene")) {
    const auto s = j["scene"].get<std::size_t>();
    if (s >= model.config().num_scenes)
      throw Error("bad-latent", "scene " + std::to_string(s) + " not in checkpoint");
    return model.scene_latent(s);
  }
  if (j.is_object() && j.contains("seed"))
    return random_latent(model.anchors(), j["seed"].get<std::uint64_t>());
  const json& arr = j.is_object() ? j.value("z", json()) : j;
  if (!arr.is_array() || arr.size() != d)
    throw Error("bad-latent", path.string() + ": expected " + std::to_string(d) + " numbers");
  LatentVector z = arr.get<LatentVector>();
  if (std::abs(l2_norm(z) - 1.0) > 1e-9)
    throw Error("bad-latent", path.string() + ": latent must have unit norm");
  return z;
}

void maybe_retrieve(Scene& scene, bool enabled) {
  if (!enabled) return;
  const RetrievalLibrary lib = default_library(scene.categories);
  for (auto& obj : scene.objects) {
    // The retrieved mesh may reach below the box (floor extrusion), so the
    // box is refitted around it.
    const Mesh world = retrieve_shape(obj, lib).world;
    const auto [lo, hi] = mesh_bounds(world);
    for (int i = 0; i < 3; ++i) {
      obj.center[i] = (lo[i] + hi[i]) / 2;
      obj.size[i] = hi[i] - lo[i];
    }
    obj.mesh = fit_unit_box(world);
  }
}

TrainConfig read_train_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  return train_config_from_json(read_json_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned 3D scene prior trained from posed 2D instance masks."};
  app.require_subcommand(1);

  std::string spec_path, out, data_dir, config_path_arg, log_path, resume, ckpt, from, to,
      view_path, report_path, scene_path, camera_path;
  std::uint64_t seed = 0;
  std::size_t steps = 5, iterations = 1000, stop_epoch = 0, synth_samples = 1000,
              recon_views = 0, points = 100, restarts = 7;
  bool retrieve = false, soft = false, as_json = false;
  std::optional<std::size_t> init_scene, latent_scene;
  std::optional<std::uint64_t> latent_seed;

  auto* gen = app.add_subcommand("gen-data", "Generate the procedural multi-view dataset");
  gen->add_option("--spec", spec_path, "DatasetSpec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Two-stage training");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--config", config_path_arg, "TrainConfig JSON")->check(CLI::ExistingFile);
  train->add_option("--out", out, "Checkpoint path")->required();
  train->add_option("--log", log_path, "Per-epoch metrics CSV");
  train->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_option("--stop-epoch", stop_epoch, "Stop after this many total epochs");

  auto* synth = app.add_subcommand("synthesize", "Decode a random latent");
  synth->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  synth->add_option("--seed", seed);
  synth->add_option("--out", out)->required();
  synth->add_flag("--retrieve", retrieve, "Replace meshes by library retrieval");

  auto* interp = app.add_subcommand("interpolate", "Decode the geodesic between two latents");
  interp->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  interp->add_option("--from", from)->required()->check(CLI::ExistingFile);
  interp->add_option("--to", to)->required()->check(CLI::ExistingFile);
  interp->add_option("--steps", steps);
  interp->add_option("--out", out, "Output directory")->required();

  auto* latent = app.add_subcommand("latent", "Write a latent vector file");
  latent->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  auto* lscene = latent->add_option("--scene", latent_scene, "Training scene embedding");
  latent->add_option("--seed", latent_seed, "Random latent")->excludes(lscene);
  latent->add_option("--out", out)->required();

  auto* recon = app.add_subcommand("reconstruct", "Fit a latent to one annotated view");
  recon->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  recon->add_option("--view", view_path)->required()->check(CLI::ExistingFile);
  recon->add_option("--out", out)->required();
  recon->add_option("--iterations", iterations);
  recon->add_option("--init-scene", init_scene, "Start from a training scene's logits");
  recon->add_option("--restarts", restarts, "Random starts screened besides the zero start");
  recon->add_flag("--retrieve", retrieve, "Replace meshes by library retrieval");

  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on its dataset");
  eval->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--report", report_path)->required();
  eval->add_option("--config", config_path_arg, "TrainConfig JSON (loss weights, raster)")
      ->check(CLI::ExistingFile);
  eval->add_option("--synth-samples", synth_samples, "Scenes for the category KL");
  eval->add_option("--reconstruct-views", recon_views, "Held-in views to reconstruct (0 skips)");
  eval->add_option("--restarts", restarts, "Random starts per reconstruction");

  auto* render = app.add_subcommand("render", "Render a scene from a camera");
  render->add_option("--scene", scene_path)->required()->check(CLI::ExistingFile);
  render->add_option("--camera", camera_path)->required()->check(CLI::ExistingFile);
  render->add_option("--out", out)->required();
  render->add_flag("--soft", soft, "Soft silhouette of all objects instead of instance ids");

  auto* grad = app.add_subcommand("gradcheck", "Run the gradient-check suite");
  grad->add_option("--points", points, "Random points per primitive");
  grad->add_option("--seed", seed);
  grad->add_flag("--json", as_json, "Print the full report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    const auto subs = app.get_subcommands();
    std::cout << (subs.empty() ? app.help() : subs.front()->help());
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  }

  try {
    if (*gen) {
      DatasetSpec spec;
      if (!spec_path.empty()) spec = dataset_spec_from_json(read_json_file(spec_path));
      const Dataset data = generate_dataset(spec);
      write_dataset(out, data, spec);
      std::printf("wrote %zu scenes to %s\n", data.scenes.size(), out.c_str());
    } else if (*train) {
      const TrainConfig config = read_train_config(config_path_arg);
      const Dataset data = load_dataset(data_dir);
      auto trainer = resume.empty() ? std::make_unique<Trainer>(data, config)
                                    : std::make_unique<Trainer>(data, config, resume);
      std::ofstream log;
      if (!log_path.empty()) {
        const bool append = !resume.empty() && fs::exists(log_path);
        log.open(log_path, append ? std::ios::app : std::ios::trunc);
        if (!log) throw Error("io", "cannot open " + log_path);
        if (!append) write_metrics_header(log);
      }
      const std::size_t end = stop_epoch > 0 ? stop_epoch : config.total_epochs();
      trainer->run(end, log.is_open() ? &log : nullptr);
      trainer->save(out);
      std::printf("epoch %zu of %zu, checkpoint %s\n", trainer->epoch(), config.total_epochs(),
                  out.c_str());
    } else if (*synth) {
      auto model = load_model(ckpt);
      Scene scene = synthesize(*model, seed);
      maybe_retrieve(scene, retrieve);
      write_scene(out, scene);
    } else if (*interp) {
      auto model = load_model(ckpt);
      const auto scenes =
          interpolate(*model, read_latent(from, *model), read_latent(to, *model), steps);
      fs::create_directories(out);
      char name[32];
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        std::snprintf(name, sizeof name, "scene_%03zu.json", i);
        write_scene(fs::path(out) / name, scenes[i]);
      }
    } else if (*latent) {
      auto model = load_model(ckpt);
      LatentVector z;
      if (latent_scene) {
        if (*latent_scene >= model->config().num_scenes)
          throw Error("bad-latent", "scene not in checkpoint");
        z = model->scene_latent(*latent_scene);
      } else {
        z = random_latent(model->anchors(), latent_seed.value_or(0));
      }
      write_text_file(out, dump_json(json{{"z", z}}));
    } else if (*recon) {
      auto model = load_model(ckpt);
      auto [view, labels] = read_view(view_path);
      ReconstructConfig rc;
      rc.iterations = iterations;
      rc.restarts = restarts;
      rc.raster.width = view.camera.width;
      rc.raster.height = view.camera.height;
      if (init_scene) {
        if (*init_scene >= model->config().num_scenes)
          throw Error("bad-config", "init scene not in checkpoint");
        rc.init_logits = model->embedding(*init_scene).values;
      }
      ReconstructResult r = reconstruct_single_view(*model, view, labels, rc);
      maybe_retrieve(r.scene, retrieve);
      write_scene(out, r.scene);
      std::printf("final loss %.6f\n", r.final_loss);
    } else if (*eval) {
      const TrainConfig config = read_train_config(config_path_arg);
      auto model = load_model(ckpt);
      const Dataset data = load_dataset(data_dir);
      RasterConfig raster = config.raster;
      raster.width = data.width;
      raster.height = data.height;
      json report = to_json(evaluate_model(*model, data, config.weights, raster));
      std::vector<Scene> gt;
      for (const auto& rec : data.scenes) gt.push_back(rec.scene);
      if (synth_samples > 0) {
        std::vector<Scene> synth;
        for (std::size_t k = 0; k < synth_samples; ++k) synth.push_back(synthesize(*model, k));
        const std::size_t nc = data.categories.size();
        report["synthesis_kl"] =
            category_kl(category_histogram(synth, nc), category_histogram(gt, nc));
        report["synthesis_samples"] = synth_samples;
      }
      if (recon_views > 0) {
        ReconstructConfig rc;
        rc.raster = raster;
        rc.restarts = restarts;
        report["reconstruction"] = to_json(evaluate_reconstruction(*model, data, recon_views, rc));
      }
      write_text_file(report_path, dump_json(report));
      std::cout << report.dump() << "\n";
    } else if (*render) {
      const Scene scene = read_scene(scene_path);
      const Camera cam = camera_from_json(read_json_file(camera_path));
      RasterConfig rc;
      rc.width = cam.width;
      rc.height = cam.height;
      std::vector<Mesh> meshes;
      for (const auto& o : scene.objects) {
        const Mesh& canonical = o.mesh.vertices.empty() ? make_box_mesh() : o.mesh;
        meshes.push_back(to_world(canonical, half_extents(o.size), o.center));
      }
      if (soft) {
        std::vector<double> occ(static_cast<std::size_t>(cam.width) * cam.height, 0.0);
        for (const Mesh& m : meshes) {
          const SilhouetteMap s = rasterize_silhouette(m, cam, rc);
          for (std::size_t i = 0; i < occ.size(); ++i)
            occ[i] = 1.0 - (1.0 - occ[i]) * (1.0 - s.values[i]);
        }
        write_pgm_ascii(out, occ, cam.width, cam.height);
      } else {
        write_id_pgm(out, rasterize_instance_ids(meshes, cam, rc));
      }
    } else if (*grad) {
      GradcheckOptions opt;
      opt.primitive_points = points;
      opt.seed = seed;
      const GradcheckReport r = run_gradcheck_suite(opt);
      if (as_json) {
        std::cout << to_json(r).dump(2) << "\n";
      } else {
        for (const auto& e : r.entries)
          std::printf("%-10s %-24s max_rel_error %.3e  tol %.0e  points %4zu  skipped %2zu  %s\n",
                      e.subsystem.c_str(), e.name.c_str(), e.max_rel_error, e.tolerance, e.points,
                      e.skipped, e.passed() ? "ok" : "FAIL");
        for (const char* s : {"primitive", "composite", "geometry", "renderer"})
          std::printf("subsystem %-10s max_rel_error %.3e\n", s, r.max_error(s));
        std::printf("%s in %.2f s\n", r.passed() ? "passed" : "FAILED", r.seconds);
      }
      return r.passed() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.code().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
