// dr3d command line: render scenes, fit meshes to silhouettes, run
// benchmarks, and verify the gradient suite.
//
// Exit codes: 0 ok, 1 domain error, 2 usage error.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <string>

#include "dr/grad.hpp"
#include "dr/pipeline.hpp"
#include "dr/templates.hpp"

namespace {

using dr::BenchConfig;
using dr::BenchRow;

int run_render(const dr::SceneConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  dr::RenderResult res = dr::render_scene(cfg);
  auto t1 = std::chrono::steady_clock::now();
  dr::save_png(res.image, cfg.output_path);
  double save_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t1).count();
  double total_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& t : res.timings) std::printf("%-10s %8.2f ms\n", t.stage.c_str(), t.ms);
  std::printf("%-10s %8.2f ms\n", "save", save_ms);
  std::printf("%-10s %8.2f ms\n", "total", total_ms);
  std::printf("wrote %s\n", cfg.output_path.c_str());
  return 0;
}

int run_gradcheck() {
  int failures = 0;
  for (const auto& check : dr::standard_gradcheck_suite()) {
    dr::FdCheckResult res = check.run();
    bool ok = res.max_rel_error <= check.tolerance;
    std::printf("%-40s max_rel_err=%.3e tol=%.1e %s\n", check.name.c_str(), res.max_rel_error,
                check.tolerance, ok ? "PASS" : "FAIL");
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dr3d: differentiable rendering and 3D geometry kernels"};
  app.require_subcommand(1);
  app.set_config("--config");

  // render
  dr::SceneConfig scene;
  std::string shader = "silhouette", lighting = "phong", projection = "perspective";
  int image_size = 64;
  auto* render = app.add_subcommand("render", "render a mesh to a PNG");
  render->add_option("--mesh", scene.mesh_path, "OBJ file");
  render->add_option("--template", scene.template_spec, "template spec, e.g. sphere:2 or cube:3");
  render->add_option("--image-size", image_size, "square image size");
  render->add_option("--k", scene.raster.faces_per_pixel, "faces per pixel");
  render->add_option("--blur-radius", scene.raster.blur_radius, "squared NDC blur radius");
  render->add_option("--sigma", scene.blend.sigma, "opacity falloff");
  render->add_option("--gamma", scene.blend.gamma, "softmax temperature");
  render->add_option("--shader", shader, "silhouette|hard|softmax");
  render->add_option("--lighting", lighting, "flat|gouraud|phong");
  render->add_option("--projection", projection, "perspective|orthographic");
  render->add_option("--distance", scene.camera_distance, "camera distance");
  render->add_option("--focal", scene.focal_length, "focal length");
  render->add_option("--angle", scene.view_angle, "view rotation about +y, radians");
  render->add_option("--out", scene.output_path, "output PNG path");

  // fit
  dr::FitConfig fit;
  auto* fitcmd = app.add_subcommand("fit", "fit a sphere template to target silhouettes");
  fitcmd->add_option("--target", fit.target_path, "target OBJ");
  fitcmd->add_option("--target-spec", fit.target_spec, "synthetic target template spec");
  fitcmd->add_option("--target-scale", fit.target_scale, "uniform scale on the target");
  fitcmd->add_option("--level", fit.template_level, "ico sphere subdivision level");
  fitcmd->add_option("--views", fit.num_views, "number of views (>= 2)");
  fitcmd->add_option("--iters", fit.iterations, "gradient descent iterations");
  fitcmd->add_option("--step", fit.step_size, "gradient descent step size");
  fitcmd->add_option("--lambda-l", fit.lambda_laplacian, "laplacian regularizer weight");
  fitcmd->add_option("--lambda-e", fit.lambda_edge, "edge length regularizer weight");
  fitcmd->add_option("--image-size", fit.image_size, "square image size");
  fitcmd->add_option("--k", fit.faces_per_pixel, "faces per pixel");
  fitcmd->add_option("--sigma", fit.sigma, "opacity falloff (fine phase)");
  fitcmd->add_option("--blur-radius", fit.blur_radius, "squared NDC blur radius (fine phase)");
  fitcmd->add_option("--coarse-sigma", fit.coarse_sigma, "opacity falloff (coarse phase)");
  fitcmd->add_option("--coarse-blur-radius", fit.coarse_blur_radius,
                     "squared NDC blur radius (coarse phase)");
  fitcmd->add_option("--coarse-fraction", fit.coarse_fraction,
                     "fraction of iterations run with the coarse band (0 disables)");
  fitcmd->add_option("--out-mesh", fit.output_mesh, "fitted mesh OBJ path");
  fitcmd->add_option("--out-trace", fit.output_trace, "loss trace CSV path");

  // bench
  std::string bench_op = "all";
  std::string bench_compositor = "both";
  std::string bench_out = "bench.csv";
  uint64_t seed = 0;
  int bench_image = 256, bench_k = 10;
  int64_t bench_points = 10000;
  double bench_faces = 10000;
  auto* bench = app.add_subcommand("bench", "benchmark kernels (5 batches x 10 runs)");
  bench->add_option("--op", bench_op, "knn|chamfer|graph_conv|rasterize|composite|all");
  bench->add_option("--points", bench_points, "points per cloud");
  bench->add_option("--faces", bench_faces, "mean faces per mesh");
  bench->add_option("--image-size", bench_image, "square image size");
  bench->add_option("--k", bench_k, "faces/points per pixel");
  bench->add_option("--compositor", bench_compositor, "alpha|norm|both (composite op)");
  bench->add_option("--seed", seed, "rng seed");
  bench->add_option("--out", bench_out, "output CSV path");

  auto* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference gradient suite");
  (void)gradcheck;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*render) {
      scene.raster.image_h = scene.raster.image_w = image_size;
      if (shader == "silhouette") scene.shader = dr::ShaderKind::Silhouette;
      else if (shader == "hard") scene.shader = dr::ShaderKind::Hard;
      else if (shader == "softmax") scene.shader = dr::ShaderKind::Softmax;
      else throw dr::UsageError("unknown shader '" + shader + "'");
      if (lighting == "flat") scene.lighting = dr::LightingModel::Flat;
      else if (lighting == "gouraud") scene.lighting = dr::LightingModel::Gouraud;
      else if (lighting == "phong") scene.lighting = dr::LightingModel::Phong;
      else throw dr::UsageError("unknown lighting '" + lighting + "'");
      scene.projection = projection == "orthographic" ? dr::ProjectionKind::Orthographic
                                                      : dr::ProjectionKind::Perspective;
      return run_render(scene);
    }
    if (*fitcmd) {
      dr::FitResult res = dr::fit_silhouette(fit);
      std::printf("final mean L_s = %.5f over %d views after %d iterations\n",
                  res.final_silhouette_loss, fit.num_views, fit.iterations);
      return 0;
    }
    if (*bench) {
      BenchConfig bc;
      bc.seed = seed;
      std::vector<BenchRow> rows;
      bool all = bench_op == "all";
      if (all || bench_op == "knn") rows.push_back(dr::bench_knn(bc, 8, bench_points, bench_k));
      if (all || bench_op == "chamfer") {
        rows.push_back(dr::bench_chamfer_knn(bc, 1, 1000, bench_points));
        rows.push_back(dr::bench_chamfer_dense(bc, 1, 1000, bench_points));
      }
      if (all || bench_op == "graph_conv")
        rows.push_back(dr::bench_graph_conv(bc, 8, bench_faces, 128));
      if (all || bench_op == "rasterize") {
        rows.push_back(dr::bench_rasterize(bc, true, bench_faces, bench_image, bench_k));
        rows.push_back(dr::bench_rasterize(bc, false, bench_faces, bench_image, bench_k));
      }
      if (all || bench_op == "composite") {
        if (bench_compositor != "norm")
          rows.push_back(dr::bench_composite(bc, dr::CompositeMode::Alpha, bench_points,
                                             bench_image, bench_k));
        if (bench_compositor != "alpha")
          rows.push_back(dr::bench_composite(bc, dr::CompositeMode::Norm, bench_points, bench_image,
                                             bench_k));
      }
      if (rows.empty()) throw dr::UsageError("unknown bench op '" + bench_op + "'");
      for (const auto& r : rows)
        std::printf("%-18s %-36s mean=%9.3f ms median=%9.3f ms peak=%lld B\n", r.op.c_str(),
                    r.config.c_str(), r.mean_ms, r.median_ms, (long long)r.peak_bytes);
      dr::write_bench_csv(bench_out, rows);
      std::printf("wrote %s\n", bench_out.c_str());
      return 0;
    }
    if (*gradcheck) return run_gradcheck();
  } catch (const dr::UsageError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
  return 0;
}
