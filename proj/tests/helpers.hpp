// Shared fixtures and brute-force reference implementations used across the
// test binaries. Everything here is deliberately naive: the point is to be
// obviously correct, not fast.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dr/batching.hpp"
#include "dr/camera.hpp"
#include "dr/core.hpp"
#include "dr/geometry.hpp"

namespace testutil {

using dr::Face;
using dr::Rng;
using dr::Vec2;
using dr::Vec3;

inline std::vector<Vec3> random_points(Rng& rng, int64_t n, double scale = 1.0) {
  std::vector<Vec3> pts(static_cast<size_t>(n));
  for (auto& p : pts) p = rng.normal_vec3() * scale;
  return pts;
}

inline std::vector<std::vector<Vec3>> random_cloud_list(Rng& rng, int batch, int64_t max_n) {
  std::vector<std::vector<Vec3>> out(static_cast<size_t>(batch));
  for (auto& cl : out) cl = random_points(rng, 1 + rng.uniform_int(max_n));
  return out;
}

// reference KNN: full sort of (dist, index) pairs
inline void brute_knn(const std::vector<double>& p, const std::vector<double>& q, int dim, int k,
                      std::vector<double>& dists, std::vector<int64_t>& idx) {
  int64_t np = int64_t(p.size()) / dim, nq = int64_t(q.size()) / dim;
  dists.assign(size_t(np * k), std::numeric_limits<double>::infinity());
  idx.assign(size_t(np * k), -1);
  std::vector<std::pair<double, int64_t>> all(static_cast<size_t>(nq));
  for (int64_t i = 0; i < np; ++i) {
    for (int64_t j = 0; j < nq; ++j) {
      double d = 0;
      for (int c = 0; c < dim; ++c) {
        double diff = p[size_t(i * dim + c)] - q[size_t(j * dim + c)];
        d += diff * diff;
      }
      all[size_t(j)] = {d, j};
    }
    std::sort(all.begin(), all.end());
    for (int64_t s = 0; s < std::min<int64_t>(k, nq); ++s) {
      dists[size_t(i * k + s)] = all[size_t(s)].first;
      idx[size_t(i * k + s)] = all[size_t(s)].second;
    }
  }
}

// reference Chamfer via the dense distance matrix
inline double brute_chamfer_element(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
  auto side = [](const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double s = 0;
    for (const Vec3& x : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& y : b) best = std::min(best, (x - y).norm2());
      s += best;
    }
    return s / double(a.size());
  };
  return side(p, q) + side(q, p);
}

// reference graph conv: dense F*W0 + A*F*W1 (+ bias)
inline std::vector<double> brute_graph_conv(const std::vector<double>& f, int64_t n,
                                            const dr::EdgeList& edges,
                                            const dr::GraphConvWeights& w) {
  std::vector<double> adj(size_t(n * n), 0.0);
  for (auto [a, b] : edges) {
    adj[size_t(a * n + b)] = 1.0;
    adj[size_t(b * n + a)] = 1.0;
  }
  std::vector<double> out(size_t(n * w.d_out), 0.0);
  for (int64_t v = 0; v < n; ++v)
    for (int o = 0; o < w.d_out; ++o) {
      double acc = w.bias.empty() ? 0.0 : w.bias[size_t(o)];
      for (int i = 0; i < w.d_in; ++i) acc += f[size_t(v * w.d_in + i)] * w.w0[size_t(i * w.d_out + o)];
      for (int64_t u = 0; u < n; ++u) {
        if (adj[size_t(v * n + u)] == 0.0) continue;
        for (int i = 0; i < w.d_in; ++i)
          acc += f[size_t(u * w.d_in + i)] * w.w1[size_t(i * w.d_out + o)];
      }
      out[size_t(v * w.d_out + o)] = acc;
    }
  return out;
}

// reference laplacian loss: || (D^-1 A - I) v ||_1 averaged over vertices
inline double brute_laplacian_element(const std::vector<Vec3>& verts,
                                      const std::vector<Face>& faces) {
  int64_t n = int64_t(verts.size());
  std::vector<std::vector<int64_t>> nbrs(static_cast<size_t>(n));
  auto link = [&](int64_t a, int64_t b) {
    auto& v = nbrs[size_t(a)];
    if (std::find(v.begin(), v.end(), b) == v.end()) v.push_back(b);
  };
  for (const Face& f : faces) {
    link(f.a, f.b); link(f.b, f.a);
    link(f.b, f.c); link(f.c, f.b);
    link(f.c, f.a); link(f.a, f.c);
  }
  double total = 0;
  for (int64_t v = 0; v < n; ++v) {
    Vec3 mean{};
    for (int64_t u : nbrs[size_t(v)]) mean += verts[size_t(u)];
    mean *= 1.0 / double(nbrs[size_t(v)].size());
    total += (mean - verts[size_t(v)]).abs_sum();
  }
  return total / double(n);
}

// relative difference with an absolute floor
inline double rel_diff(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// central-difference directional derivative of a scalar functional
template <typename F>
double central_diff(F&& f, std::vector<double> x, const std::vector<double>& dir, double eps) {
  std::vector<double> xp = x, xm = x;
  for (size_t i = 0; i < x.size(); ++i) {
    xp[i] += eps * dir[i];
    xm[i] -= eps * dir[i];
  }
  return (f(xp) - f(xm)) / (2.0 * eps);
}

}  // namespace testutil
