#include "dr/grad.hpp"

#include <cmath>

#include "dr/batching.hpp"
#include "dr/camera.hpp"
#include "dr/geometry.hpp"
#include "dr/mesh_raster.hpp"
#include "dr/point_render.hpp"
#include "dr/shading.hpp"
#include "dr/templates.hpp"

namespace dr {

DifferentiableOp compose(const std::vector<DifferentiableOp>& ops) {
  DifferentiableOp out;
  for (const auto& op : ops) out.name += (out.name.empty() ? "" : "|") + op.name;
  out.forward = [ops](const std::vector<double>& x) {
    std::vector<double> cur = x;
    for (const auto& op : ops) cur = op.forward(cur);
    return cur;
  };
  out.vjp = [ops](const std::vector<double>& x, const std::vector<double>& cot) {
    // re-run forward to collect stage inputs, then chain in reverse
    std::vector<std::vector<double>> inputs;
    inputs.push_back(x);
    for (size_t i = 0; i + 1 < ops.size(); ++i) inputs.push_back(ops[i].forward(inputs.back()));
    std::vector<double> cur = cot;
    for (size_t i = ops.size(); i-- > 0;) cur = ops[i].vjp(inputs[i], cur);
    return cur;
  };
  return out;
}

FdCheckResult fd_check(const DifferentiableOp& op, const std::vector<double>& x, double eps,
                       int directions, uint64_t seed) {
  std::vector<double> y0 = op.forward(x);
  for (double v : y0)
    if (!std::isfinite(v)) throw NonFiniteError("fd_check: forward produced non-finite output");

  double xmax = 0;
  for (double v : x) xmax = std::max(xmax, std::abs(v));
  double h = eps * std::max(1.0, xmax);

  Rng rng(seed);
  FdCheckResult res;
  res.directions = directions;
  for (int dir = 0; dir < directions; ++dir) {
    std::vector<double> d(x.size());
    double n2 = 0;
    for (auto& v : d) {
      v = rng.normal();
      n2 += v * v;
    }
    double inv = 1.0 / std::sqrt(std::max(n2, 1e-300));
    for (auto& v : d) v *= inv;
    std::vector<double> u(y0.size());
    for (auto& v : u) v = rng.normal();

    std::vector<double> g = op.vjp(x, u);
    double analytic = 0;
    for (size_t i = 0; i < x.size(); ++i) analytic += g[i] * d[i];

    std::vector<double> xp = x, xm = x;
    for (size_t i = 0; i < x.size(); ++i) {
      xp[i] += h * d[i];
      xm[i] -= h * d[i];
    }
    std::vector<double> yp = op.forward(xp), ym = op.forward(xm);
    double numeric = 0;
    for (size_t i = 0; i < y0.size(); ++i) numeric += u[i] * (yp[i] - ym[i]) / (2.0 * h);

    double rel = std::abs(analytic - numeric) /
                 std::max(1e-8, std::max(std::abs(analytic), std::abs(numeric)));
    res.max_rel_error = std::max(res.max_rel_error, rel);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Standard suite
//
// Fixed scenes chosen so the discrete choices (KNN assignment, fragment
// membership, nearest boundary feature) stay stable inside the fd
// perturbation ball.

namespace {

std::vector<double> flatten(const std::vector<Vec3>& v) {
  std::vector<double> out(v.size() * 3);
  for (size_t i = 0; i < v.size(); ++i) {
    out[3 * i] = v[i].x;
    out[3 * i + 1] = v[i].y;
    out[3 * i + 2] = v[i].z;
  }
  return out;
}

std::vector<Vec3> unflatten(const std::vector<double>& v) {
  std::vector<Vec3> out(v.size() / 3);
  for (size_t i = 0; i < out.size(); ++i) out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return out;
}

std::vector<Vec3> random_cloud(Rng& rng, int n, double spread) {
  std::vector<Vec3> pts(static_cast<size_t>(n));
  for (auto& p : pts) p = rng.normal_vec3() * spread;
  return pts;
}

DifferentiableOp chamfer_op(std::vector<Vec3> q_pts) {
  PointCloudBatch q({std::move(q_pts)});
  DifferentiableOp op;
  op.name = "chamfer_distance";
  op.forward = [q](const std::vector<double>& x) {
    PointCloudBatch p({unflatten(x)});
    return std::vector<double>{chamfer_distance(p, q).mean};
  };
  op.vjp = [q](const std::vector<double>& x, const std::vector<double>& cot) {
    PointCloudBatch p({unflatten(x)});
    ChamferResult res = chamfer_distance(p, q);
    std::vector<Vec3> d_p, d_q;
    chamfer_backward(p, q, res, cot[0], d_p, d_q);
    return flatten(d_p);
  };
  return op;
}

DifferentiableOp graph_conv_op(int64_t nv, EdgeList edges, GraphConvWeights w) {
  DifferentiableOp op;
  op.name = "graph_conv";
  op.forward = [=](const std::vector<double>& x) { return graph_conv(x, nv, edges, w); };
  op.vjp = [=](const std::vector<double>& x, const std::vector<double>& cot) {
    return graph_conv_backward(x, nv, edges, w, cot).d_features;
  };
  return op;
}

DifferentiableOp mesh_loss_op(const MeshBatch& base, bool laplacian) {
  DifferentiableOp op;
  op.name = laplacian ? "laplacian_loss" : "edge_length_loss";
  op.forward = [base, laplacian](const std::vector<double>& x) {
    MeshBatch m = base.with_verts(unflatten(x));
    return std::vector<double>{laplacian ? laplacian_loss(m).mean : edge_length_loss(m).mean};
  };
  op.vjp = [base, laplacian](const std::vector<double>& x, const std::vector<double>& cot) {
    MeshBatch m = base.with_verts(unflatten(x));
    std::vector<Vec3> d;
    if (laplacian)
      laplacian_loss_backward(m, cot[0], d);
    else
      edge_length_loss_backward(m, cot[0], d);
    return flatten(d);
  };
  return op;
}

DifferentiableOp silhouette_render_op(const MeshBatch& base, const Camera& c,
                                      const RasterSettings& s, double sigma) {
  DifferentiableOp op;
  op.name = "silhouette_blend.rasterize_meshes";
  op.forward = [=](const std::vector<double>& x) {
    MeshBatch m = base.with_verts(unflatten(x));
    return silhouette_blend(rasterize_meshes(m, c, s), sigma);
  };
  op.vjp = [=](const std::vector<double>& x, const std::vector<double>& cot) {
    MeshBatch m = base.with_verts(unflatten(x));
    MeshFragments frag = rasterize_meshes(m, c, s);
    std::vector<double> d_dists = silhouette_blend_backward(frag, sigma, cot);
    std::vector<double> zeros_z(size_t(frag.slots()), 0.0);
    std::vector<double> zeros_b(size_t(frag.slots() * 3), 0.0);
    return flatten(rasterize_backward(m, c, s, frag, zeros_z, zeros_b, d_dists));
  };
  return op;
}

DifferentiableOp softmax_render_op(const MeshBatch& base, const Camera& c, const RasterSettings& s,
                                   const BlendParams& p, std::vector<Vec3> vert_colors) {
  DifferentiableOp op;
  op.name = "softmax_blend.rasterize_meshes";
  auto render = [=](const MeshBatch& m, MeshFragments& frag, std::vector<Vec3>& colors) {
    frag = rasterize_meshes(m, c, s);
    std::vector<double> flat_attr = flatten(vert_colors);
    std::vector<double> interp = interpolate_face_attributes(m, frag, flat_attr, 3);
    colors = unflatten(interp);
  };
  op.forward = [=](const std::vector<double>& x) {
    MeshBatch m = base.with_verts(unflatten(x));
    MeshFragments frag;
    std::vector<Vec3> colors;
    render(m, frag, colors);
    std::vector<Vec3> img = softmax_blend(frag, colors, p, c.znear, c.zfar);
    return flatten(img);
  };
  op.vjp = [=](const std::vector<double>& x, const std::vector<double>& cot) {
    MeshBatch m = base.with_verts(unflatten(x));
    MeshFragments frag;
    std::vector<Vec3> colors;
    render(m, frag, colors);
    SoftmaxBlendGrads bg = softmax_blend_backward(frag, colors, p, c.znear, c.zfar, unflatten(cot));
    std::vector<double> flat_attr = flatten(vert_colors);
    InterpolateGrads ig =
        interpolate_face_attributes_backward(m, frag, flat_attr, 3, flatten(bg.d_colors));
    return flatten(rasterize_backward(m, c, s, frag, bg.d_zbuf, ig.d_bary, bg.d_dists));
  };
  return op;
}

DifferentiableOp composite_render_op(const PointCloudBatch& base, const Camera& c,
                                     const PointRasterSettings& s, CompositeMode mode,
                                     std::vector<double> point_features, int dim) {
  DifferentiableOp op;
  op.name = mode == CompositeMode::Alpha ? "alpha_composite.rasterize_points"
                                         : "norm_composite.rasterize_points";
  auto gather = [dim](const PointFragments& frag, const std::vector<double>& pf) {
    std::vector<double> out(size_t(frag.slots() * dim), 0.0);
    for (int64_t slot = 0; slot < frag.slots(); ++slot) {
      int64_t pid = frag.idx[size_t(slot)];
      if (pid < 0) continue;
      for (int d = 0; d < dim; ++d) out[size_t(slot * dim + d)] = pf[size_t(pid * dim + d)];
    }
    return out;
  };
  std::vector<double> bg(size_t(dim), 0.0);
  op.forward = [=](const std::vector<double>& x) {
    PointCloudBatch pc = base.with_points(unflatten(x));
    PointFragments frag = rasterize_points(pc, c, s);
    std::vector<double> alphas = splat_opacity(frag, s.radius);
    std::vector<double> feats = gather(frag, point_features);
    return mode == CompositeMode::Alpha ? alpha_composite(frag, alphas, feats, dim, bg)
                                        : norm_composite(frag, alphas, feats, dim, bg);
  };
  op.vjp = [=](const std::vector<double>& x, const std::vector<double>& cot) {
    PointCloudBatch pc = base.with_points(unflatten(x));
    PointFragments frag = rasterize_points(pc, c, s);
    std::vector<double> alphas = splat_opacity(frag, s.radius);
    std::vector<double> feats = gather(frag, point_features);
    CompositeGrads cg = composite_backward(mode, frag, alphas, feats, dim, cot);
    return flatten(splat_position_backward(pc, c, s, frag, cg.d_alphas));
  };
  return op;
}

}  // namespace

std::vector<RegisteredCheck> standard_gradcheck_suite() {
  std::vector<RegisteredCheck> checks;

  {
    Rng rng(11);
    auto p = random_cloud(rng, 24, 1.0);
    auto q = random_cloud(rng, 31, 1.0);
    DifferentiableOp op = chamfer_op(q);
    std::vector<double> x = flatten(p);
    checks.push_back({"chamfer_distance", 1e-4, [op, x] { return fd_check(op, x); }});
  }
  {
    Rng rng(12);
    int64_t nv = 12;
    EdgeList edges;
    for (int64_t i = 0; i < nv; ++i) edges.push_back({i, (i + 1) % nv});
    edges.push_back({0, 5});
    edges.push_back({2, 9});
    GraphConvWeights w;
    w.d_in = 4;
    w.d_out = 3;
    w.w0.resize(12);
    w.w1.resize(12);
    w.bias.resize(3);
    for (auto& v : w.w0) v = rng.normal();
    for (auto& v : w.w1) v = rng.normal();
    for (auto& v : w.bias) v = rng.normal();
    std::vector<double> x(size_t(nv * w.d_in));
    for (auto& v : x) v = rng.normal();
    DifferentiableOp op = graph_conv_op(nv, edges, w);
    checks.push_back({"graph_conv", 1e-4, [op, x] { return fd_check(op, x); }});
  }
  {
    // jitter the sphere so no component of the L1 laplacian sits on the
    // |.| kink within the finite-difference step
    Rng rng(17);
    MeshBatch sphere = ico_sphere(1);
    std::vector<Vec3> jittered = sphere.verts_packed().data;
    for (auto& v : jittered) v += rng.normal_vec3() * 0.05;
    sphere = sphere.with_verts(jittered);
    std::vector<double> x = flatten(sphere.verts_packed().data);
    DifferentiableOp lap = mesh_loss_op(sphere, true);
    DifferentiableOp edge = mesh_loss_op(sphere, false);
    checks.push_back({"laplacian_loss", 1e-3, [lap, x] { return fd_check(lap, x); }});
    checks.push_back({"edge_length_loss", 1e-3, [edge, x] { return fd_check(edge, x); }});
  }

  // The soft rasterizer output is only effectively continuous in the vertex
  // positions when the opacity falloff is much narrower than the blur band
  // (a face crossing the band edge then carries ~zero opacity) and K is
  // large enough that no pixel ever evicts a slot. Both are required for
  // finite differences to see the analytic derivative.
  Camera cam = Camera::look_from_distance(3.0, ProjectionKind::Perspective, 2.0);
  RasterSettings rs;
  rs.image_h = rs.image_w = 24;
  rs.faces_per_pixel = 32;
  rs.blur_radius = 0.02;
  MeshBatch sphere = ico_sphere(1);
  {
    DifferentiableOp op = silhouette_render_op(sphere, cam, rs, 0.02 / 30.0);
    std::vector<double> x = flatten(sphere.verts_packed().data);
    checks.push_back(
        {"silhouette_blend.rasterize_meshes", 1e-3, [op, x] { return fd_check(op, x, 1e-5); }});
  }
  {
    Rng rng(13);
    std::vector<Vec3> colors(size_t(sphere.total_verts()));
    for (auto& c : colors) c = {rng.uniform(), rng.uniform(), rng.uniform()};
    BlendParams bp;
    bp.sigma = 0.02 / 30.0;
    bp.gamma = 0.05;
    DifferentiableOp op = softmax_render_op(sphere, cam, rs, bp, colors);
    std::vector<double> x = flatten(sphere.verts_packed().data);
    checks.push_back(
        {"softmax_blend.rasterize_meshes", 1e-3, [op, x] { return fd_check(op, x, 1e-5); }});
  }
  {
    // seed chosen so no splat rim grazes a pixel center and point depths are
    // well separated; either degeneracy puts a kink inside the fd step
    Rng rng(15);
    std::vector<Vec3> pts = random_cloud(rng, 40, 0.5);
    PointCloudBatch pc({pts});
    std::vector<double> feats(size_t(pc.total_points() * 3));
    for (auto& f : feats) f = rng.uniform();
    Camera pcam = Camera::look_from_distance(3.0, ProjectionKind::Orthographic);
    PointRasterSettings ps;
    ps.image_h = ps.image_w = 24;
    // K = point count: no slot eviction, so the only membership boundary is
    // the splat rim, where opacity vanishes continuously
    ps.points_per_pixel = 40;
    ps.radius = 0.2;
    std::vector<double> x = flatten(pts);
    DifferentiableOp a = composite_render_op(pc, pcam, ps, CompositeMode::Alpha, feats, 3);
    DifferentiableOp n = composite_render_op(pc, pcam, ps, CompositeMode::Norm, feats, 3);
    checks.push_back(
        {"alpha_composite.rasterize_points", 1e-3, [a, x] { return fd_check(a, x, 1e-5); }});
    checks.push_back(
        {"norm_composite.rasterize_points", 1e-3, [n, x] { return fd_check(n, x, 1e-5); }});
  }
  return checks;
}

}  // namespace dr
