#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "dr/point_render.hpp"
#include "helpers.hpp"

using namespace dr;
using namespace testutil;

static PointFragments make_frag(const std::vector<int64_t>& idx, const std::vector<double>& zbuf,
                                const std::vector<double>& dists2) {
  PointFragments f;
  f.batch = 1;
  f.h = f.w = 1;
  f.k = int(idx.size());
  f.idx = idx;
  f.zbuf = zbuf;
  f.dists2 = dists2;
  return f;
}

TEST_CASE("tiled point rasterizer is bit-identical to the naive oracle") {
  Rng rng(83);
  for (int trial = 0; trial < 15; ++trial) {
    int b = 1 + int(rng.uniform_int(3));
    PointCloudBatch pc(random_cloud_list(rng, b, 200));
    PointRasterSettings s;
    s.image_h = s.image_w = rng.uniform_int(2) == 0 ? 32 : 64;
    s.points_per_pixel = rng.uniform_int(2) == 0 ? 1 : 8;
    s.radius = rng.uniform(0.02, 0.15);
    s.tile_size = rng.uniform_int(2) == 0 ? 16 : 8;
    Camera cam = rng.uniform_int(2) == 0
                     ? Camera::look_from_distance(3.0, ProjectionKind::Perspective, 1.5)
                     : Camera::look_from_distance(3.0, ProjectionKind::Orthographic);
    PointFragments t = rasterize_points(pc, cam, s);
    PointFragments n = rasterize_points_naive(pc, cam, s);
    REQUIRE(t.idx == n.idx);
    REQUIRE(t.zbuf == n.zbuf);
    REQUIRE(t.dists2 == n.dists2);
  }
}

TEST_CASE("point fragment slot invariants") {
  Rng rng(89);
  PointCloudBatch pc(random_cloud_list(rng, 1, 300));
  PointRasterSettings s;
  s.image_h = s.image_w = 32;
  s.points_per_pixel = 6;
  s.radius = 0.12;
  Camera cam = Camera::look_from_distance(3.0, ProjectionKind::Orthographic);
  PointFragments f = rasterize_points(pc, cam, s);
  double r2 = s.radius * s.radius;
  bool any = false;
  for (int64_t px = 0; px < f.slots() / f.k; ++px) {
    bool seen_empty = false;
    for (int k = 0; k < f.k; ++k) {
      int64_t slot = px * f.k + k;
      if (f.idx[size_t(slot)] < 0) {
        seen_empty = true;
        continue;
      }
      any = true;
      CHECK_FALSE(seen_empty);
      CHECK(f.dists2[size_t(slot)] <= r2);
      CHECK(f.zbuf[size_t(slot)] >= cam.znear);
      if (k > 0 && f.idx[size_t(slot - 1)] >= 0) {
        bool ordered = f.zbuf[size_t(slot - 1)] < f.zbuf[size_t(slot)] ||
                       (f.zbuf[size_t(slot - 1)] == f.zbuf[size_t(slot)] &&
                        f.idx[size_t(slot - 1)] < f.idx[size_t(slot)]);
        CHECK(ordered);
      }
    }
  }
  CHECK(any);
}

TEST_CASE("splat opacity falls off quadratically and hits 0 at the rim") {
  PointFragments f = make_frag({0, 1, -1}, {1, 2, 0}, {0.0, 0.02, 0.0});
  double r = 0.2;
  std::vector<double> a = splat_opacity(f, r);
  CHECK(a[0] == doctest::Approx(1.0));          // dead center
  CHECK(a[1] == doctest::Approx(0.5));          // half of r^2 = 0.04
  CHECK(a[2] == 0.0);                            // empty slot
}

TEST_CASE("alpha compositing with one slot is alpha times feature") {
  PointFragments f = make_frag({7}, {1.0}, {0.01});
  std::vector<double> alphas{0.6};
  std::vector<double> feats{0.25, 0.5, 1.0};
  std::vector<double> bg{0, 0, 0};
  std::vector<double> out = alpha_composite(f, alphas, feats, 3, bg);
  CHECK(std::abs(out[0] - 0.6 * 0.25) <= 1e-12);
  CHECK(std::abs(out[1] - 0.6 * 0.5) <= 1e-12);
  CHECK(std::abs(out[2] - 0.6 * 1.0) <= 1e-12);
}

TEST_CASE("alpha compositing applies front-to-back transmittance") {
  PointFragments f = make_frag({0, 1}, {1.0, 2.0}, {0.0, 0.0});
  std::vector<double> alphas{0.5, 0.8};
  std::vector<double> feats{1.0, 2.0};
  std::vector<double> out = alpha_composite(f, alphas, feats, 1, {0.0});
  CHECK(out[0] == doctest::Approx(0.5 * 1.0 + 0.5 * 0.8 * 2.0).epsilon(1e-12));
}

TEST_CASE("norm compositing is invariant to slot permutation") {
  std::vector<double> alphas{0.3, 0.9, 0.5};
  std::vector<double> feats{1.0, 0.0, 0.0, 1.0, 0.5, 0.5};
  // transpose feats per slot: slot s has dim 2
  std::vector<double> f2{1.0, 0.0, 0.0, 1.0, 0.5, 0.5};
  PointFragments a = make_frag({0, 1, 2}, {1, 2, 3}, {0, 0, 0});
  std::vector<double> base = norm_composite(a, alphas, f2, 2, {0, 0});
  // permute slots (2, 0, 1)
  PointFragments b = make_frag({2, 0, 1}, {3, 1, 2}, {0, 0, 0});
  std::vector<double> pa{alphas[2], alphas[0], alphas[1]};
  std::vector<double> pf{f2[4], f2[5], f2[0], f2[1], f2[2], f2[3]};
  std::vector<double> perm = norm_composite(b, pa, pf, 2, {0, 0});
  CHECK(std::abs(base[0] - perm[0]) <= 1e-12);
  CHECK(std::abs(base[1] - perm[1]) <= 1e-12);
}

TEST_CASE("compositors fall back to the background") {
  PointFragments empty = make_frag({-1, -1}, {0, 0}, {0, 0});
  std::vector<double> alphas(2, 0.0), feats(4, 0.0);  // 2 slots x dim 2
  std::vector<double> bg{0.1, 0.2};
  CHECK(alpha_composite(empty, alphas, feats, 2, bg) == std::vector<double>{0.1, 0.2});
  CHECK(norm_composite(empty, alphas, feats, 2, bg) == std::vector<double>{0.1, 0.2});
  // occupied but zero alpha sum: norm uses background too
  PointFragments occ = make_frag({0}, {1.0}, {0.04});
  CHECK(norm_composite(occ, {0.0}, {7.0, 7.0}, 2, bg) == std::vector<double>{0.1, 0.2});
}

TEST_CASE("composite backward matches finite differences") {
  Rng rng(97);
  PointFragments f = make_frag({0, 3, -1, 5, 9}, {1, 2, 0, 3, 4}, {0.01, 0.02, 0, 0.005, 0.03});
  int dim = 3;
  std::vector<double> alphas{0.3, 0.7, 0.0, 0.95, 0.2};
  std::vector<double> feats(size_t(f.slots() * dim));
  for (auto& v : feats) v = rng.uniform();
  std::vector<double> d_out(static_cast<size_t>(dim));
  for (auto& v : d_out) v = rng.normal();

  for (CompositeMode mode : {CompositeMode::Alpha, CompositeMode::Norm}) {
    CompositeGrads g = composite_backward(mode, f, alphas, feats, dim, d_out);
    auto scalar = [&](const std::vector<double>& a, const std::vector<double>& ft) {
      std::vector<double> out = mode == CompositeMode::Alpha
                                    ? alpha_composite(f, a, ft, dim, {0, 0, 0})
                                    : norm_composite(f, a, ft, dim, {0, 0, 0});
      return std::inner_product(out.begin(), out.end(), d_out.begin(), 0.0);
    };
    double eps = 1e-7;
    for (size_t i = 0; i < alphas.size(); ++i) {
      if (f.idx[i] < 0) {
        CHECK(g.d_alphas[i] == 0.0);
        continue;
      }
      std::vector<double> ap = alphas, am = alphas;
      ap[i] += eps;
      am[i] -= eps;
      double fd = (scalar(ap, feats) - scalar(am, feats)) / (2 * eps);
      CHECK(rel_diff(fd, g.d_alphas[i], 1e-8) <= 1e-5);
    }
    for (size_t i = 0; i < feats.size(); ++i) {
      std::vector<double> fp = feats, fm = feats;
      fp[i] += eps;
      fm[i] -= eps;
      double fd = (scalar(alphas, fp) - scalar(alphas, fm)) / (2 * eps);
      CHECK(rel_diff(fd, g.d_features[i], 1e-8) <= 1e-5);
    }
  }
}

TEST_CASE("alpha composite backward survives a fully opaque slot") {
  PointFragments f = make_frag({0, 1, 2}, {1, 2, 3}, {0, 0.01, 0.02});
  std::vector<double> alphas{1.0, 0.5, 0.25};  // slot 0 saturates transmittance
  std::vector<double> feats{2.0, 3.0, 4.0};
  std::vector<double> d_out{1.0};
  CompositeGrads g = composite_backward(CompositeMode::Alpha, f, alphas, feats, 1, d_out);
  // out = a0 f0 + a1 (1-a0) f1 + a2 (1-a0)(1-a1) f2; d out / d a0 = f0 - a1 f1 - a2 (1-a1) f2
  double want = 2.0 - 0.5 * 3.0 - 0.25 * 0.5 * 4.0;
  CHECK(g.d_alphas[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("splat position backward matches finite differences") {
  Rng rng(101);
  std::vector<Vec3> pts = random_points(rng, 25, 0.5);
  PointCloudBatch pc({pts});
  PointRasterSettings s;
  s.image_h = s.image_w = 16;
  s.points_per_pixel = 8;
  s.radius = 0.25;  // generous splats keep membership stable
  Camera cam = Camera::look_from_distance(3.0, ProjectionKind::Orthographic);
  PointFragments frag = rasterize_points(pc, cam, s);

  std::vector<double> d_alphas(size_t(frag.slots()));
  for (auto& v : d_alphas) v = rng.normal();
  std::vector<Vec3> g = splat_position_backward(pc, cam, s, frag, d_alphas);

  auto scalar = [&](const std::vector<Vec3>& p) {
    PointFragments fr = rasterize_points(pc.with_points(p), cam, s);
    std::vector<double> a = splat_opacity(fr, s.radius);
    double acc = 0;
    for (int64_t i = 0; i < fr.slots(); ++i) acc += a[size_t(i)] * d_alphas[size_t(i)];
    return acc;
  };
  double eps = 1e-6;
  int bad = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    for (int axis = 0; axis < 2; ++axis) {  // xy only: ortho z has no alpha effect
      std::vector<Vec3> pp = pts, pm = pts;
      double* cp = axis == 0 ? &pp[i].x : &pp[i].y;
      double* cm = axis == 0 ? &pm[i].x : &pm[i].y;
      *cp += eps;
      *cm -= eps;
      double fd = (scalar(pp) - scalar(pm)) / (2 * eps);
      double an = axis == 0 ? g[i].x : g[i].y;
      if (rel_diff(fd, an, 1e-6) > 1e-3) ++bad;  // rare membership flips allowed
    }
  }
  CHECK(bad <= 2);
}
