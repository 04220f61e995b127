#include "dr/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "dr/geometry.hpp"
#include "dr/templates.hpp"

namespace dr {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

MeshBatch mesh_from_spec(const std::string& spec) {
  size_t colon = spec.find(':');
  std::string kind = spec.substr(0, colon);
  int param = colon == std::string::npos ? -1 : std::stoi(spec.substr(colon + 1));
  if (kind == "sphere") return ico_sphere(param < 0 ? 2 : param);
  if (kind == "cube") return cube(1.0, param < 0 ? 1 : param);
  throw UsageError("unknown template spec '" + spec + "'");
}

MeshBatch scale_mesh(const MeshBatch& m, double s) {
  std::vector<Vec3> verts = m.verts_packed().data;
  for (Vec3& v : verts) v *= s;
  return m.with_verts(verts);
}

Camera view_camera(double distance, double focal, ProjectionKind kind, double angle) {
  // rotate the world about +y, then push to view depth
  Mat3 r = axis_angle({0, 1, 0}, angle);
  if (kind == ProjectionKind::Perspective)
    return Camera::perspective(r, {0, 0, distance}, focal);
  return Camera::orthographic(r, {0, 0, distance});
}

}  // namespace

MeshBatch load_scene_mesh(const SceneConfig& cfg) {
  if (!cfg.mesh_path.empty()) return obj_to_batch(load_obj(cfg.mesh_path));
  return mesh_from_spec(cfg.template_spec);
}

Camera scene_camera(const SceneConfig& cfg) {
  return view_camera(cfg.camera_distance, cfg.focal_length, cfg.projection, cfg.view_angle);
}

RenderResult render_scene(const SceneConfig& cfg) {
  RenderResult out;
  auto t0 = Clock::now();
  MeshBatch mesh = load_scene_mesh(cfg);
  std::vector<Vec3> colors(size_t(mesh.total_verts()), Vec3{0.7, 0.7, 0.7});
  if (!cfg.mesh_path.empty()) {
    ObjMesh obj = load_obj(cfg.mesh_path);  // reload for colors only
    if (obj.vertex_colors) colors = *obj.vertex_colors;
  }
  out.timings.push_back({"load", ms_since(t0)});

  t0 = Clock::now();
  Camera cam = scene_camera(cfg);
  MeshFragments frag = rasterize_meshes(mesh, cam, cfg.raster);
  out.timings.push_back({"rasterize", ms_since(t0)});

  t0 = Clock::now();
  out.alpha = silhouette_blend(frag, cfg.blend.sigma);
  int h = cfg.raster.image_h, w = cfg.raster.image_w;
  if (cfg.shader == ShaderKind::Silhouette) {
    out.image.h = h;
    out.image.w = w;
    out.image.c = 3;
    out.image.data.resize(size_t(h) * w * 3);
    for (int i = 0; i < h * w; ++i)
      for (int ch = 0; ch < 3; ++ch) out.image.data[size_t(i) * 3 + ch] = out.alpha[size_t(i)];
  } else {
    std::vector<Vec3> slot_colors = shade(cfg.lighting, mesh, cam, frag, cfg.light, colors);
    std::vector<Vec3> rgb = cfg.shader == ShaderKind::Hard
                                ? hard_blend(frag, slot_colors, cfg.blend.background_color)
                                : softmax_blend(frag, slot_colors, cfg.blend, cam.znear, cam.zfar);
    out.image.h = h;
    out.image.w = w;
    out.image.c = cfg.shader == ShaderKind::Softmax ? 4 : 3;
    out.image.data.resize(size_t(h) * w * out.image.c);
    for (int i = 0; i < h * w; ++i) {
      out.image.data[size_t(i) * out.image.c + 0] = rgb[size_t(i)].x;
      out.image.data[size_t(i) * out.image.c + 1] = rgb[size_t(i)].y;
      out.image.data[size_t(i) * out.image.c + 2] = rgb[size_t(i)].z;
      if (out.image.c == 4) out.image.data[size_t(i) * 4 + 3] = out.alpha[size_t(i)];
    }
  }
  out.timings.push_back({"shade", ms_since(t0)});
  return out;
}

FitResult fit_silhouette(const FitConfig& cfg) {
  if (cfg.num_views < 2) throw UsageError("fit requires at least 2 views");

  MeshBatch target = cfg.target_path.empty() ? mesh_from_spec(cfg.target_spec)
                                             : obj_to_batch(load_obj(cfg.target_path));
  if (cfg.target_scale != 1.0) target = scale_mesh(target, cfg.target_scale);

  RasterSettings rs;
  rs.image_h = rs.image_w = cfg.image_size;
  rs.faces_per_pixel = cfg.faces_per_pixel;

  std::vector<Camera> cams;
  for (int v = 0; v < cfg.num_views; ++v) {
    double angle = 2.0 * 3.14159265358979323846 * v / cfg.num_views;
    cams.push_back(view_camera(cfg.camera_distance, cfg.focal_length,
                               ProjectionKind::Perspective, angle));
  }

  double sigma = 0;
  std::vector<std::vector<double>> target_alpha;
  auto set_band = [&](double new_sigma, double new_blur) {
    sigma = new_sigma;
    rs.blur_radius = new_blur;
    target_alpha.clear();
    for (int v = 0; v < cfg.num_views; ++v)
      target_alpha.push_back(silhouette_blend(rasterize_meshes(target, cams[size_t(v)], rs), sigma));
  };
  int coarse_iters = int(cfg.coarse_fraction * cfg.iterations);
  set_band(coarse_iters > 0 ? cfg.coarse_sigma : cfg.sigma,
           coarse_iters > 0 ? cfg.coarse_blur_radius : cfg.blur_radius);

  MeshBatch mesh = ico_sphere(cfg.template_level);
  std::vector<Vec3> verts = mesh.verts_packed().data;

  // Adam state; plain gradient descent stalls here because the silhouette
  // gradient only has support in the rim band of each view
  std::vector<Vec3> adam_m(verts.size(), Vec3{}), adam_v(verts.size(), Vec3{});
  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

  FitResult out{mesh, {}, 0};
  int steps_in_phase = 0;  // Adam restarts at the band switch: the gradient
                           // scale changes by orders of magnitude there
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    if (iter == coarse_iters && coarse_iters > 0) {
      set_band(cfg.sigma, cfg.blur_radius);
      std::fill(adam_m.begin(), adam_m.end(), Vec3{});
      std::fill(adam_v.begin(), adam_v.end(), Vec3{});
      steps_in_phase = 0;
    }
    mesh = mesh.with_verts(verts);
    std::vector<Vec3> grad(verts.size(), Vec3{});
    double l_s = 0;
    for (int v = 0; v < cfg.num_views; ++v) {
      MeshFragments frag = rasterize_meshes(mesh, cams[size_t(v)], rs);
      std::vector<double> alpha = silhouette_blend(frag, sigma);
      l_s += silhouette_iou_loss(alpha, target_alpha[size_t(v)]);
      std::vector<double> d_alpha =
          silhouette_iou_loss_backward(alpha, target_alpha[size_t(v)], 1.0);
      std::vector<double> d_dists = silhouette_blend_backward(frag, sigma, d_alpha);
      std::vector<double> zeros_z(size_t(frag.slots()), 0.0);
      std::vector<double> zeros_b(size_t(frag.slots() * 3), 0.0);
      std::vector<Vec3> g =
          rasterize_backward(mesh, cams[size_t(v)], rs, frag, zeros_z, zeros_b, d_dists);
      for (size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
    }
    double l_l = laplacian_loss(mesh).mean;
    double l_e = edge_length_loss(mesh).mean;
    double total = l_s + cfg.lambda_laplacian * l_l + cfg.lambda_edge * l_e;
    if (!std::isfinite(total))
      throw NonFiniteError("fit diverged at iteration " + std::to_string(iter));

    std::vector<Vec3> g_reg;
    laplacian_loss_backward(mesh, cfg.lambda_laplacian, g_reg);
    for (size_t i = 0; i < grad.size(); ++i) grad[i] += g_reg[i];
    edge_length_loss_backward(mesh, cfg.lambda_edge, g_reg);
    for (size_t i = 0; i < grad.size(); ++i) grad[i] += g_reg[i];

    out.trace.push_back({iter, l_s / cfg.num_views, l_l, l_e, total});
    ++steps_in_phase;
    double c1 = 1.0 - std::pow(b1, steps_in_phase), c2 = 1.0 - std::pow(b2, steps_in_phase);
    for (size_t i = 0; i < verts.size(); ++i) {
      auto axis = [&](double g, double& m, double& v, double& x) {
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        x -= cfg.step_size * (m / c1) / (std::sqrt(v / c2) + adam_eps);
      };
      axis(grad[i].x, adam_m[i].x, adam_v[i].x, verts[i].x);
      axis(grad[i].y, adam_m[i].y, adam_v[i].y, verts[i].y);
      axis(grad[i].z, adam_m[i].z, adam_v[i].z, verts[i].z);
    }
  }

  mesh = mesh.with_verts(verts);
  double l_s = 0;
  for (int v = 0; v < cfg.num_views; ++v) {
    std::vector<double> alpha = silhouette_blend(rasterize_meshes(mesh, cams[size_t(v)], rs), sigma);
    l_s += silhouette_iou_loss(alpha, target_alpha[size_t(v)]);
  }
  out.mesh = mesh;
  out.final_silhouette_loss = l_s / cfg.num_views;

  if (!cfg.output_mesh.empty())
    save_obj(cfg.output_mesh, mesh.verts_list()[0], mesh.faces_list()[0]);
  if (!cfg.output_trace.empty()) write_trace_csv(cfg.output_trace, out.trace);
  return out;
}

// ---------------------------------------------------------------------------
// Benchmarks
//
// Protocol: `batches` random batches, `runs` timed runs per batch, report
// the mean and median per-run time. peak_bytes counts the dominant working
// buffers, which is what separates the dense and KNN Chamfer paths.

namespace {

PointCloudBatch random_batch_points(Rng& rng, int batch_size, int64_t n) {
  std::vector<std::vector<Vec3>> clouds(static_cast<size_t>(batch_size));
  for (auto& cl : clouds) {
    cl.resize(size_t(n));
    for (auto& p : cl) p = rng.normal_vec3();
  }
  return PointCloudBatch(std::move(clouds));
}

BenchRow finish(std::string op, std::string config, std::vector<double> times, int64_t bytes) {
  BenchRow row{std::move(op), std::move(config), 0, 0, bytes};
  for (double t : times) row.mean_ms += t;
  row.mean_ms /= double(times.size());
  std::sort(times.begin(), times.end());
  row.median_ms = times[times.size() / 2];
  return row;
}

// dense-matrix Chamfer baseline: materializes the |P| x |Q| distances
double chamfer_dense_element(const std::vector<Vec3>& p, const std::vector<Vec3>& q,
                             std::vector<double>& matrix) {
  matrix.resize(p.size() * q.size());
  for (size_t i = 0; i < p.size(); ++i)
    for (size_t j = 0; j < q.size(); ++j) matrix[i * q.size() + j] = (p[i] - q[j]).norm2();
  double sp = 0, sq = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    double best = matrix[i * q.size()];
    for (size_t j = 1; j < q.size(); ++j) best = std::min(best, matrix[i * q.size() + j]);
    sp += best;
  }
  for (size_t j = 0; j < q.size(); ++j) {
    double best = matrix[j];
    for (size_t i = 1; i < p.size(); ++i) best = std::min(best, matrix[i * q.size() + j]);
    sq += best;
  }
  return sp / double(p.size()) + sq / double(q.size());
}

}  // namespace

BenchRow bench_knn(const BenchConfig& b, int batch_size, int64_t n_points, int k) {
  std::vector<double> times;
  for (int bt = 0; bt < b.batches; ++bt) {
    Rng rng(b.seed + uint64_t(bt));
    PointCloudBatch p = random_batch_points(rng, batch_size, n_points);
    PointCloudBatch q = random_batch_points(rng, batch_size, n_points);
    for (int r = 0; r < b.runs; ++r) {
      auto t0 = Clock::now();
      KnnResult res = knn_points(p, q, k);
      times.push_back(ms_since(t0));
      (void)res;
    }
  }
  int64_t bytes = int64_t(batch_size) * n_points * k * 16;  // dists + idx
  return finish("knn", "B=" + std::to_string(batch_size) + " N=" + std::to_string(n_points) +
                           " K=" + std::to_string(k),
                std::move(times), bytes);
}

BenchRow bench_chamfer_knn(const BenchConfig& b, int batch_size, int64_t np, int64_t nq) {
  std::vector<double> times;
  for (int bt = 0; bt < b.batches; ++bt) {
    Rng rng(b.seed + uint64_t(bt));
    PointCloudBatch p = random_batch_points(rng, batch_size, np);
    PointCloudBatch q = random_batch_points(rng, batch_size, nq);
    for (int r = 0; r < b.runs; ++r) {
      auto t0 = Clock::now();
      ChamferResult res = chamfer_distance(p, q);
      times.push_back(ms_since(t0));
      (void)res;
    }
  }
  int64_t bytes = int64_t(batch_size) * (np + nq) * 16;  // K=1 dists + idx both directions
  return finish("chamfer_knn",
                "B=" + std::to_string(batch_size) + " P=" + std::to_string(np) +
                    " Q=" + std::to_string(nq),
                std::move(times), bytes);
}

BenchRow bench_chamfer_dense(const BenchConfig& b, int batch_size, int64_t np, int64_t nq) {
  std::vector<double> times;
  for (int bt = 0; bt < b.batches; ++bt) {
    Rng rng(b.seed + uint64_t(bt));
    PointCloudBatch p = random_batch_points(rng, batch_size, np);
    PointCloudBatch q = random_batch_points(rng, batch_size, nq);
    std::vector<double> matrix;
    for (int r = 0; r < b.runs; ++r) {
      auto t0 = Clock::now();
      double acc = 0;
      for (int e = 0; e < batch_size; ++e)
        acc += chamfer_dense_element(p.points_list()[size_t(e)], q.points_list()[size_t(e)], matrix);
      times.push_back(ms_since(t0));
      (void)acc;
    }
  }
  int64_t bytes = np * nq * 8;  // per-element distance matrix
  return finish("chamfer_dense",
                "B=" + std::to_string(batch_size) + " P=" + std::to_string(np) +
                    " Q=" + std::to_string(nq),
                std::move(times), bytes);
}

BenchRow bench_graph_conv(const BenchConfig& b, int batch_size, double mean_faces, int dim) {
  std::vector<double> times;
  int64_t verts_total = 0;
  for (int bt = 0; bt < b.batches; ++bt) {
    MeshBatch m = synthetic_batch(mean_faces, mean_faces / 4, batch_size, b.seed + uint64_t(bt));
    EdgeList edges = mesh_edges_packed(m);
    GraphConvWeights w;
    w.d_in = w.d_out = dim;
    w.w0.resize(size_t(dim) * dim);
    w.w1.resize(size_t(dim) * dim);
    Rng rng(b.seed + 100 + uint64_t(bt));
    for (auto& v : w.w0) v = rng.normal();
    for (auto& v : w.w1) v = rng.normal();
    std::vector<double> features(size_t(m.total_verts() * dim));
    for (auto& v : features) v = rng.normal();
    verts_total = m.total_verts();
    for (int r = 0; r < b.runs; ++r) {
      auto t0 = Clock::now();
      auto out = graph_conv(features, m.total_verts(), edges, w);
      times.push_back(ms_since(t0));
      (void)out;
    }
  }
  return finish("graph_conv",
                "B=" + std::to_string(batch_size) + " mean_faces=" + std::to_string(int(mean_faces)) +
                    " D=" + std::to_string(dim),
                std::move(times), verts_total * dim * 8);
}

BenchRow bench_rasterize(const BenchConfig& b, bool tiled, double mean_faces, int image, int k) {
  std::vector<double> times;
  RasterSettings rs;
  rs.image_h = rs.image_w = image;
  rs.faces_per_pixel = k;
  Camera cam = Camera::look_from_distance(3.0, ProjectionKind::Perspective, 2.0);
  int64_t faces_total = 0;
  for (int bt = 0; bt < b.batches; ++bt) {
    MeshBatch m = synthetic_batch(mean_faces, 0, 1, b.seed + uint64_t(bt));
    faces_total = m.total_faces();
    for (int r = 0; r < b.runs; ++r) {
      auto t0 = Clock::now();
      MeshFragments frag = tiled ? rasterize_meshes(m, cam, rs) : rasterize_meshes_naive(m, cam, rs);
      times.push_back(ms_since(t0));
      (void)frag;
    }
  }
  int64_t bytes = int64_t(image) * image * k * (8 + 8 + 24 + 8);
  return finish(tiled ? "rasterize_tiled" : "rasterize_naive",
                "faces=" + std::to_string(faces_total) + " img=" + std::to_string(image) +
                    " K=" + std::to_string(k),
                std::move(times), bytes);
}

BenchRow bench_composite(const BenchConfig& b, CompositeMode mode, int64_t n_points, int image,
                         int k) {
  std::vector<double> times;
  PointRasterSettings ps;
  ps.image_h = ps.image_w = image;
  ps.points_per_pixel = k;
  ps.radius = 0.02;
  Camera cam = Camera::look_from_distance(3.0, ProjectionKind::Orthographic);
  std::vector<double> bg{0, 0, 0};
  for (int bt = 0; bt < b.batches; ++bt) {
    Rng rng(b.seed + uint64_t(bt));
    PointCloudBatch pc = random_batch_points(rng, 1, n_points);
    std::vector<double> feats(size_t(pc.total_points() * 3));
    for (auto& f : feats) f = rng.uniform();
    PointFragments frag = rasterize_points(pc, cam, ps);
    std::vector<double> alphas = splat_opacity(frag, ps.radius);
    std::vector<double> slot_feats(size_t(frag.slots() * 3), 0.0);
    for (int64_t slot = 0; slot < frag.slots(); ++slot) {
      int64_t pid = frag.idx[size_t(slot)];
      if (pid < 0) continue;
      for (int d = 0; d < 3; ++d) slot_feats[size_t(slot * 3 + d)] = feats[size_t(pid * 3 + d)];
    }
    for (int r = 0; r < b.runs; ++r) {
      auto t0 = Clock::now();
      auto out = mode == CompositeMode::Alpha
                     ? alpha_composite(frag, alphas, slot_feats, 3, bg)
                     : norm_composite(frag, alphas, slot_feats, 3, bg);
      times.push_back(ms_since(t0));
      (void)out;
    }
  }
  int64_t bytes = int64_t(image) * image * k * 32;
  return finish(mode == CompositeMode::Alpha ? "alpha_composite" : "norm_composite",
                "N=" + std::to_string(n_points) + " img=" + std::to_string(image) +
                    " K=" + std::to_string(k),
                std::move(times), bytes);
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "op,config,mean_ms,median_ms,peak_bytes\n";
  for (const auto& r : rows)
    out << r.op << ",\"" << r.config << "\"," << r.mean_ms << ',' << r.median_ms << ','
        << r.peak_bytes << '\n';
}

void write_trace_csv(const std::string& path, const std::vector<FitTraceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "iter,L_s,L_l,L_e,total\n";
  for (const auto& r : rows)
    out << r.iter << ',' << r.l_s << ',' << r.l_l << ',' << r.l_e << ',' << r.total << '\n';
}

}  // namespace dr
