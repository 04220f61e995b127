#include "dr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>

namespace dr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Insertion into a small sorted (dist, idx) buffer. Strict-less keeps the
// first-seen (smaller) index on ties, so rows end up sorted by (dist, idx).
inline void knn_insert(double* best_d, int64_t* best_i, int k, double d, int64_t j) {
  if (d >= best_d[k - 1]) return;
  int pos = k - 1;
  while (pos > 0 && d < best_d[pos - 1]) {
    best_d[pos] = best_d[pos - 1];
    best_i[pos] = best_i[pos - 1];
    --pos;
  }
  best_d[pos] = d;
  best_i[pos] = j;
}

template <int D>
inline double dist2_fixed(const double* a, const double* b) {
  double s = 0;
  for (int d = 0; d < D; ++d) {
    double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

// K = 1 (the Chamfer case) with a branchless select so the candidate loop
// vectorizes; the insertion path below carries a hard-to-predict branch per
// candidate.
template <int D>
void knn1_element_fixed(const double* p, int64_t np, const double* q, int64_t nq, double* dists,
                        int64_t* idx) {
  for (int64_t i = 0; i < np; ++i) {
    const double* pi = p + i * D;
    double best = kInf;
    int64_t bi = -1;
    for (int64_t j = 0; j < nq; ++j) {
      double d = dist2_fixed<D>(pi, q + j * D);
      bool better = d < best;
      best = better ? d : best;
      bi = better ? j : bi;
    }
    dists[i] = best;
    idx[i] = bi;
  }
}

// Uniform grid over the reference cloud for exact 1-NN in 3-D. Queries walk
// Chebyshev shells outward from the query's (clamped) cell and stop once the
// running best distance rules out the next shell. Candidates compare by
// (dist, index), which matches the brute-force result bit for bit: the
// per-pair distance is computed by the same code, and ties resolve to the
// smaller index either way.
struct NnGrid3 {
  double lo[3] = {0, 0, 0};
  double cell = 1;
  int n[3] = {1, 1, 1};
  std::vector<int32_t> start;  // per-cell prefix offsets into order
  std::vector<int32_t> order;  // point indices grouped by cell

  int cell_of(const double* pt, int axis) const {
    int c = int((pt[axis] - lo[axis]) / cell);
    return std::clamp(c, 0, n[axis] - 1);
  }

  void build(const double* q, int64_t nq) {
    double hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = hi[a] = q[a];
    }
    for (int64_t j = 1; j < nq; ++j)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], q[j * 3 + a]);
        hi[a] = std::max(hi[a], q[j * 3 + a]);
      }
    double vol = 1;
    for (int a = 0; a < 3; ++a) vol *= std::max(hi[a] - lo[a], 1e-12);
    // aim for ~2 points per cell
    cell = std::max(std::cbrt(2.0 * vol / double(nq)), 1e-12);
    int64_t total = 1;
    for (int a = 0; a < 3; ++a) {
      n[a] = std::max(1, std::min<int>(1024, int((hi[a] - lo[a]) / cell) + 1));
      total *= n[a];
    }
    start.assign(size_t(total) + 1, 0);
    std::vector<int32_t> at(static_cast<size_t>(nq));
    for (int64_t j = 0; j < nq; ++j) {
      const double* pt = q + j * 3;
      int32_t c = int32_t((cell_of(pt, 0) * n[1] + cell_of(pt, 1)) * n[2] + cell_of(pt, 2));
      at[size_t(j)] = c;
      ++start[size_t(c) + 1];
    }
    for (size_t c = 1; c < start.size(); ++c) start[c] += start[c - 1];
    order.resize(size_t(nq));
    std::vector<int32_t> fill(start.begin(), start.end() - 1);
    for (int64_t j = 0; j < nq; ++j) order[size_t(fill[size_t(at[size_t(j)])]++)] = int32_t(j);
  }

  void query(const double* pi, const double* q, double& best, int64_t& bi) const {
    best = kInf;
    bi = -1;
    int c[3] = {cell_of(pi, 0), cell_of(pi, 1), cell_of(pi, 2)};
    int max_ring = std::max({c[0], n[0] - 1 - c[0], c[1], n[1] - 1 - c[1], c[2], n[2] - 1 - c[2]});
    for (int r = 0; r <= max_ring; ++r) {
      // any point in a cell at Chebyshev ring r is at least (r-1) cells away
      if (r >= 2) {
        double bound = double(r - 1) * cell;
        if (best <= bound * bound) break;
      }
      for (int x = std::max(0, c[0] - r); x <= std::min(n[0] - 1, c[0] + r); ++x) {
        bool x_edge = (x == c[0] - r || x == c[0] + r);
        for (int y = std::max(0, c[1] - r); y <= std::min(n[1] - 1, c[1] + r); ++y) {
          bool y_edge = (y == c[1] - r || y == c[1] + r);
          int zl = std::max(0, c[2] - r), zh = std::min(n[2] - 1, c[2] + r);
          for (int z = zl; z <= zh; ++z) {
            if (!x_edge && !y_edge && z != c[2] - r && z != c[2] + r) continue;
            size_t cc = size_t((x * n[1] + y) * n[2] + z);
            for (int32_t s = start[cc]; s < start[cc + 1]; ++s) {
              int64_t j = order[size_t(s)];
              double d = dist2_fixed<3>(pi, q + j * 3);
              if (d < best || (d == best && j < bi)) {
                best = d;
                bi = j;
              }
            }
          }
        }
      }
    }
  }
};

void knn1_grid_element(const double* p, int64_t np, const double* q, int64_t nq, double* dists,
                       int64_t* idx) {
  NnGrid3 grid;
  grid.build(q, nq);
  for (int64_t i = 0; i < np; ++i) grid.query(p + i * 3, q, dists[i], idx[i]);
}

template <int D>
void knn_element_fixed(const double* p, int64_t np, const double* q, int64_t nq, int k,
                       double* dists, int64_t* idx) {
  if (k == 1) {
    if (D == 3 && nq >= 64) {
      knn1_grid_element(p, np, q, nq, dists, idx);
      return;
    }
    knn1_element_fixed<D>(p, np, q, nq, dists, idx);
    return;
  }
  for (int64_t i = 0; i < np; ++i) {
    double* best_d = dists + i * k;
    int64_t* best_i = idx + i * k;
    std::fill(best_d, best_d + k, kInf);
    std::fill(best_i, best_i + k, int64_t(-1));
    const double* pi = p + i * D;
    for (int64_t j = 0; j < nq; ++j) {
      knn_insert(best_d, best_i, k, dist2_fixed<D>(pi, q + j * D), j);
    }
  }
}

// Heap path for large K or unusual D. Max-heap ordered by (dist, idx) so the
// worst candidate is on top; ties resolve to the smaller index.
void knn_element_generic(const double* p, int64_t np, const double* q, int64_t nq, int dim,
                         int k, double* dists, int64_t* idx) {
  std::vector<std::pair<double, int64_t>> heap;
  heap.reserve(size_t(k));
  for (int64_t i = 0; i < np; ++i) {
    heap.clear();
    const double* pi = p + i * dim;
    for (int64_t j = 0; j < nq; ++j) {
      double d = 0;
      const double* qj = q + j * dim;
      for (int d2 = 0; d2 < dim; ++d2) {
        double diff = pi[d2] - qj[d2];
        d += diff * diff;
      }
      std::pair<double, int64_t> cand{d, j};
      if (int64_t(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    std::sort_heap(heap.begin(), heap.end());
    double* best_d = dists + i * k;
    int64_t* best_i = idx + i * k;
    for (int s = 0; s < k; ++s) {
      if (s < int(heap.size())) {
        best_d[s] = heap[size_t(s)].first;
        best_i[s] = heap[size_t(s)].second;
      } else {
        best_d[s] = kInf;
        best_i[s] = -1;
      }
    }
  }
}

void knn_dispatch(const double* p, int64_t np, const double* q, int64_t nq, int dim, int k,
                  double* dists, int64_t* idx) {
  if (k <= 32) {
    switch (dim) {
      case 2: knn_element_fixed<2>(p, np, q, nq, k, dists, idx); return;
      case 3: knn_element_fixed<3>(p, np, q, nq, k, dists, idx); return;
      case 4: knn_element_fixed<4>(p, np, q, nq, k, dists, idx); return;
      default: break;
    }
  }
  knn_element_generic(p, np, q, nq, dim, k, dists, idx);
}

}  // namespace

KnnResult knn_points(const PointCloudBatch& p, const PointCloudBatch& q, int k) {
  if (p.size() != q.size())
    throw ShapeError("knn_points: batch sizes differ: " + std::to_string(p.size()) + " vs " +
                     std::to_string(q.size()));
  if (k < 1) throw ShapeError("knn_points: K must be >= 1");
  KnnResult out;
  out.k = k;
  out.dists.resize(size_t(p.size()));
  out.idx.resize(size_t(p.size()));
  for (int b = 0; b < p.size(); ++b) {
    int64_t np = p.num_points_per_cloud()[size_t(b)];
    out.dists[size_t(b)].resize(size_t(np * k));
    out.idx[size_t(b)].resize(size_t(np * k));
  }
  // parallel over query rows inside each element; rows write disjoint slots
  for (int b = 0; b < p.size(); ++b) {
    const auto& pl = p.points_list()[size_t(b)];
    const auto& ql = q.points_list()[size_t(b)];
    const double* pd = reinterpret_cast<const double*>(pl.data());
    const double* qd = reinterpret_cast<const double*>(ql.data());
    double* dd = out.dists[size_t(b)].data();
    int64_t* id = out.idx[size_t(b)].data();
    parallel_for(int64_t(pl.size()), [&](int64_t lo, int64_t hi) {
      knn_dispatch(pd + lo * 3, hi - lo, qd, int64_t(ql.size()), 3, k, dd + lo * k, id + lo * k);
    });
  }
  return out;
}

KnnResult knn_points_nd(const std::vector<std::vector<double>>& p,
                        const std::vector<std::vector<double>>& q, int dim, int k) {
  if (p.size() != q.size()) throw ShapeError("knn_points_nd: batch sizes differ");
  if (k < 1) throw ShapeError("knn_points_nd: K must be >= 1");
  KnnResult out;
  out.k = k;
  out.dists.resize(p.size());
  out.idx.resize(p.size());
  for (size_t b = 0; b < p.size(); ++b) {
    int64_t np = int64_t(p[b].size()) / dim;
    out.dists[b].resize(size_t(np * k));
    out.idx[b].resize(size_t(np * k));
  }
  for (size_t b = 0; b < p.size(); ++b) {
    const double* pd = p[b].data();
    const double* qd = q[b].data();
    int64_t nq = int64_t(q[b].size()) / dim;
    double* dd = out.dists[b].data();
    int64_t* id = out.idx[b].data();
    parallel_for(int64_t(p[b].size()) / dim, [&](int64_t lo, int64_t hi) {
      knn_dispatch(pd + lo * dim, hi - lo, qd, nq, dim, k, dd + lo * k, id + lo * k);
    });
  }
  return out;
}

ChamferResult chamfer_distance(const PointCloudBatch& p, const PointCloudBatch& q) {
  if (p.size() != q.size()) throw ShapeError("chamfer_distance: batch sizes differ");
  for (int b = 0; b < p.size(); ++b) {
    if (p.num_points_per_cloud()[size_t(b)] == 0 || q.num_points_per_cloud()[size_t(b)] == 0)
      throw EmptyInputError("chamfer_distance: empty cloud in element " + std::to_string(b));
  }
  KnnResult p_to_q = knn_points(p, q, 1);
  KnnResult q_to_p = knn_points(q, p, 1);

  ChamferResult out;
  out.per_element.resize(size_t(p.size()));
  out.nn_p_to_q.resize(size_t(p.size()));
  out.nn_q_to_p.resize(size_t(p.size()));
  for (int b = 0; b < p.size(); ++b) {
    int64_t np = p.num_points_per_cloud()[size_t(b)];
    int64_t nq = q.num_points_per_cloud()[size_t(b)];
    double sp = 0, sq = 0;
    for (int64_t i = 0; i < np; ++i) sp += p_to_q.dists[size_t(b)][size_t(i)];
    for (int64_t i = 0; i < nq; ++i) sq += q_to_p.dists[size_t(b)][size_t(i)];
    out.per_element[size_t(b)] = sp / double(np) + sq / double(nq);
    out.nn_p_to_q[size_t(b)] = std::move(p_to_q.idx[size_t(b)]);
    out.nn_q_to_p[size_t(b)] = std::move(q_to_p.idx[size_t(b)]);
    out.mean += out.per_element[size_t(b)];
  }
  out.mean /= double(p.size());
  return out;
}

void chamfer_backward(const PointCloudBatch& p, const PointCloudBatch& q,
                      const ChamferResult& res, double d_mean,
                      std::vector<Vec3>& d_p, std::vector<Vec3>& d_q) {
  d_p.assign(size_t(p.total_points()), Vec3{});
  d_q.assign(size_t(q.total_points()), Vec3{});
  double coeff = d_mean / double(p.size());
  for (int b = 0; b < p.size(); ++b) {
    const auto& pl = p.points_list()[size_t(b)];
    const auto& ql = q.points_list()[size_t(b)];
    int64_t po = p.points_packed().offsets[size_t(b)];
    int64_t qo = q.points_packed().offsets[size_t(b)];
    double wp = coeff * 2.0 / double(pl.size());
    double wq = coeff * 2.0 / double(ql.size());
    for (size_t i = 0; i < pl.size(); ++i) {
      int64_t j = res.nn_p_to_q[size_t(b)][i];
      Vec3 g = (pl[i] - ql[size_t(j)]) * wp;
      d_p[size_t(po + int64_t(i))] += g;
      d_q[size_t(qo + j)] -= g;
    }
    for (size_t i = 0; i < ql.size(); ++i) {
      int64_t j = res.nn_q_to_p[size_t(b)][i];
      Vec3 g = (ql[i] - pl[size_t(j)]) * wq;
      d_q[size_t(qo + int64_t(i))] += g;
      d_p[size_t(po + j)] -= g;
    }
  }
}

// ---------------------------------------------------------------------------
// Graph convolution

namespace {

// CSR adjacency with neighbor lists sorted ascending
struct Adjacency {
  std::vector<int64_t> offsets;
  std::vector<int64_t> neighbors;
};

Adjacency build_adjacency(int64_t num_verts, const EdgeList& edges) {
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= num_verts || v < 0 || v >= num_verts)
      throw IndexError("edge endpoint out of range: (" + std::to_string(u) + ", " +
                       std::to_string(v) + ") with " + std::to_string(num_verts) + " verts");
  }
  std::vector<std::vector<int64_t>> adj(static_cast<size_t>(num_verts));
  for (const auto& [u, v] : edges) {
    adj[size_t(u)].push_back(v);
    adj[size_t(v)].push_back(u);
  }
  Adjacency out;
  out.offsets.resize(size_t(num_verts + 1), 0);
  for (int64_t i = 0; i < num_verts; ++i) {
    std::sort(adj[size_t(i)].begin(), adj[size_t(i)].end());
    out.offsets[size_t(i + 1)] = out.offsets[size_t(i)] + int64_t(adj[size_t(i)].size());
  }
  out.neighbors.reserve(size_t(out.offsets[size_t(num_verts)]));
  for (int64_t i = 0; i < num_verts; ++i)
    out.neighbors.insert(out.neighbors.end(), adj[size_t(i)].begin(), adj[size_t(i)].end());
  return out;
}

// y += x * W, with x 1 x d_in and W d_in x d_out row-major
inline void accum_vecmat(const double* x, const double* w, int d_in, int d_out, double* y) {
  for (int i = 0; i < d_in; ++i) {
    double xi = x[i];
    if (xi == 0) continue;
    const double* wr = w + int64_t(i) * d_out;
    for (int j = 0; j < d_out; ++j) y[j] += xi * wr[j];
  }
}

// y += x * W^T, with x 1 x d_out
inline void accum_vecmat_t(const double* x, const double* w, int d_in, int d_out, double* y) {
  for (int i = 0; i < d_in; ++i) {
    const double* wr = w + int64_t(i) * d_out;
    double s = 0;
    for (int j = 0; j < d_out; ++j) s += x[j] * wr[j];
    y[i] += s;
  }
}

}  // namespace

std::vector<double> graph_conv(const std::vector<double>& features, int64_t num_verts,
                               const EdgeList& edges, const GraphConvWeights& w) {
  if (int64_t(features.size()) != num_verts * w.d_in)
    throw ShapeError("graph_conv: features size != num_verts * d_in");
  Adjacency adj = build_adjacency(num_verts, edges);
  std::vector<double> out(size_t(num_verts * w.d_out), 0.0);
  parallel_for(num_verts, [&](int64_t lo, int64_t hi) {
    std::vector<double> nb_sum(size_t(w.d_in));
    for (int64_t v = lo; v < hi; ++v) {
      double* ov = out.data() + v * w.d_out;
      if (!w.bias.empty())
        for (int j = 0; j < w.d_out; ++j) ov[j] = w.bias[size_t(j)];
      accum_vecmat(features.data() + v * w.d_in, w.w0.data(), w.d_in, w.d_out, ov);
      std::fill(nb_sum.begin(), nb_sum.end(), 0.0);
      for (int64_t e = adj.offsets[size_t(v)]; e < adj.offsets[size_t(v + 1)]; ++e) {
        const double* fu = features.data() + adj.neighbors[size_t(e)] * w.d_in;
        for (int i = 0; i < w.d_in; ++i) nb_sum[size_t(i)] += fu[i];
      }
      accum_vecmat(nb_sum.data(), w.w1.data(), w.d_in, w.d_out, ov);
    }
  });
  return out;
}

GraphConvGrads graph_conv_backward(const std::vector<double>& features, int64_t num_verts,
                                   const EdgeList& edges, const GraphConvWeights& w,
                                   const std::vector<double>& d_out) {
  if (int64_t(d_out.size()) != num_verts * w.d_out)
    throw ShapeError("graph_conv_backward: cotangent size mismatch");
  Adjacency adj = build_adjacency(num_verts, edges);
  GraphConvGrads g;
  g.d_features.assign(size_t(num_verts * w.d_in), 0.0);
  g.d_w0.assign(w.w0.size(), 0.0);
  g.d_w1.assign(w.w1.size(), 0.0);
  g.d_bias.assign(w.bias.size(), 0.0);

  // d_f_v = d_out_v W0^T + sum_{u in N(v)} d_out_u W1^T  (A is symmetric)
  parallel_for(num_verts, [&](int64_t lo, int64_t hi) {
    std::vector<double> nb_sum(size_t(w.d_out));
    for (int64_t v = lo; v < hi; ++v) {
      double* gv = g.d_features.data() + v * w.d_in;
      accum_vecmat_t(d_out.data() + v * w.d_out, w.w0.data(), w.d_in, w.d_out, gv);
      std::fill(nb_sum.begin(), nb_sum.end(), 0.0);
      for (int64_t e = adj.offsets[size_t(v)]; e < adj.offsets[size_t(v + 1)]; ++e) {
        const double* du = d_out.data() + adj.neighbors[size_t(e)] * w.d_out;
        for (int j = 0; j < w.d_out; ++j) nb_sum[size_t(j)] += du[j];
      }
      accum_vecmat_t(nb_sum.data(), w.w1.data(), w.d_in, w.d_out, gv);
    }
  });

  // weight grads accumulated serially in vertex order
  std::vector<double> nb_sum(size_t(w.d_in));
  for (int64_t v = 0; v < num_verts; ++v) {
    const double* fv = features.data() + v * w.d_in;
    const double* dv = d_out.data() + v * w.d_out;
    for (int i = 0; i < w.d_in; ++i)
      for (int j = 0; j < w.d_out; ++j) g.d_w0[size_t(int64_t(i) * w.d_out + j)] += fv[i] * dv[j];
    std::fill(nb_sum.begin(), nb_sum.end(), 0.0);
    for (int64_t e = adj.offsets[size_t(v)]; e < adj.offsets[size_t(v + 1)]; ++e) {
      const double* fu = features.data() + adj.neighbors[size_t(e)] * w.d_in;
      for (int i = 0; i < w.d_in; ++i) nb_sum[size_t(i)] += fu[i];
    }
    for (int i = 0; i < w.d_in; ++i)
      for (int j = 0; j < w.d_out; ++j)
        g.d_w1[size_t(int64_t(i) * w.d_out + j)] += nb_sum[size_t(i)] * dv[j];
    for (size_t j = 0; j < g.d_bias.size(); ++j) g.d_bias[j] += dv[j];
  }
  return g;
}

EdgeList mesh_edges_packed(const MeshBatch& m) {
  std::set<std::pair<int64_t, int64_t>> uniq;
  for (const Face& f : m.faces_packed().data) {
    int64_t v[3] = {f.a, f.b, f.c};
    for (int e = 0; e < 3; ++e) {
      int64_t a = v[e], b = v[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      if (a != b) uniq.insert({a, b});
    }
  }
  return EdgeList(uniq.begin(), uniq.end());
}

// ---------------------------------------------------------------------------
// Sampling

PointCloudBatch sample_points_from_meshes(const MeshBatch& m, int64_t n, uint64_t seed) {
  std::vector<std::vector<Vec3>> samples(size_t(m.size()));
  for (int b = 0; b < m.size(); ++b) samples[size_t(b)].resize(size_t(n));

  // validated up front so the error does not depend on scheduling
  for (int b = 0; b < m.size(); ++b) {
    const auto& verts = m.verts_list()[size_t(b)];
    const auto& faces = m.faces_list()[size_t(b)];
    double total = 0;
    for (const Face& f : faces)
      total += 0.5 * (verts[size_t(f.b)] - verts[size_t(f.a)])
                         .cross(verts[size_t(f.c)] - verts[size_t(f.a)])
                         .norm();
    if (faces.empty() || total <= 0)
      throw DegenerateMeshError("mesh " + std::to_string(b) + " has no positive-area face");
  }

  parallel_for(m.size(), [&](int64_t lo, int64_t hi) {
    for (int64_t b = lo; b < hi; ++b) {
      const auto& verts = m.verts_list()[size_t(b)];
      const auto& faces = m.faces_list()[size_t(b)];
      std::vector<double> cdf(faces.size());
      double total = 0;
      for (size_t f = 0; f < faces.size(); ++f) {
        const Face& fc = faces[f];
        total += 0.5 * (verts[size_t(fc.b)] - verts[size_t(fc.a)])
                           .cross(verts[size_t(fc.c)] - verts[size_t(fc.a)])
                           .norm();
        cdf[f] = total;
      }
      Rng rng(seed * 0x100000001b3ull + uint64_t(b));
      for (int64_t i = 0; i < n; ++i) {
        double r = rng.uniform() * total;
        size_t f = size_t(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
        if (f >= faces.size()) f = faces.size() - 1;
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1) {  // fold into the triangle
          u = 1 - u;
          v = 1 - v;
        }
        const Face& fc = faces[f];
        const Vec3& a = verts[size_t(fc.a)];
        const Vec3& bb = verts[size_t(fc.b)];
        const Vec3& c = verts[size_t(fc.c)];
        samples[size_t(b)][size_t(i)] = a + (bb - a) * u + (c - a) * v;
      }
    }
  });
  return PointCloudBatch(std::move(samples));
}

// ---------------------------------------------------------------------------
// Mesh regularizers

namespace {
// per-element unique undirected edges with local indices
std::vector<std::pair<int64_t, int64_t>> element_edges(const std::vector<Face>& faces) {
  std::set<std::pair<int64_t, int64_t>> uniq;
  for (const Face& f : faces) {
    int64_t v[3] = {f.a, f.b, f.c};
    for (int e = 0; e < 3; ++e) {
      int64_t a = v[e], b = v[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      if (a != b) uniq.insert({a, b});
    }
  }
  return {uniq.begin(), uniq.end()};
}
}  // namespace

BatchLoss edge_length_loss(const MeshBatch& m) {
  BatchLoss out;
  out.per_element.resize(size_t(m.size()), 0.0);
  for (int b = 0; b < m.size(); ++b) {
    const auto& verts = m.verts_list()[size_t(b)];
    auto edges = element_edges(m.faces_list()[size_t(b)]);
    if (edges.empty()) continue;
    double s = 0;
    for (const auto& [u, v] : edges) s += (verts[size_t(u)] - verts[size_t(v)]).norm2();
    out.per_element[size_t(b)] = s / double(edges.size());
    out.mean += out.per_element[size_t(b)];
  }
  out.mean /= double(m.size());
  return out;
}

void edge_length_loss_backward(const MeshBatch& m, double d_mean, std::vector<Vec3>& d_verts) {
  d_verts.assign(size_t(m.total_verts()), Vec3{});
  for (int b = 0; b < m.size(); ++b) {
    const auto& verts = m.verts_list()[size_t(b)];
    auto edges = element_edges(m.faces_list()[size_t(b)]);
    if (edges.empty()) continue;
    int64_t off = m.verts_packed().offsets[size_t(b)];
    double coeff = d_mean / double(m.size()) * 2.0 / double(edges.size());
    for (const auto& [u, v] : edges) {
      Vec3 g = (verts[size_t(u)] - verts[size_t(v)]) * coeff;
      d_verts[size_t(off + u)] += g;
      d_verts[size_t(off + v)] -= g;
    }
  }
}

namespace {
std::vector<std::vector<int64_t>> neighbor_lists(int64_t nv,
                                                 const std::vector<std::pair<int64_t, int64_t>>& edges) {
  std::vector<std::vector<int64_t>> adj(static_cast<size_t>(nv));
  for (const auto& [u, v] : edges) {
    adj[size_t(u)].push_back(v);
    adj[size_t(v)].push_back(u);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

inline Vec3 sign3(const Vec3& v) {
  auto s = [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); };
  return {s(v.x), s(v.y), s(v.z)};
}
}  // namespace

BatchLoss laplacian_loss(const MeshBatch& m) {
  BatchLoss out;
  out.per_element.resize(size_t(m.size()), 0.0);
  for (int b = 0; b < m.size(); ++b) {
    const auto& verts = m.verts_list()[size_t(b)];
    auto adj = neighbor_lists(int64_t(verts.size()), element_edges(m.faces_list()[size_t(b)]));
    double s = 0;
    for (size_t i = 0; i < verts.size(); ++i) {
      if (adj[i].empty())
        throw IsolatedVertexError("vertex " + std::to_string(i) + " of mesh " + std::to_string(b) +
                                  " has no neighbors");
      Vec3 mean{};
      for (int64_t u : adj[i]) mean += verts[size_t(u)];
      mean *= 1.0 / double(adj[i].size());
      s += (mean - verts[i]).abs_sum();
    }
    out.per_element[size_t(b)] = s / double(verts.size());
    out.mean += out.per_element[size_t(b)];
  }
  out.mean /= double(m.size());
  return out;
}

void laplacian_loss_backward(const MeshBatch& m, double d_mean, std::vector<Vec3>& d_verts) {
  d_verts.assign(size_t(m.total_verts()), Vec3{});
  for (int b = 0; b < m.size(); ++b) {
    const auto& verts = m.verts_list()[size_t(b)];
    auto adj = neighbor_lists(int64_t(verts.size()), element_edges(m.faces_list()[size_t(b)]));
    int64_t off = m.verts_packed().offsets[size_t(b)];
    double coeff = d_mean / double(m.size()) / double(verts.size());
    for (size_t i = 0; i < verts.size(); ++i) {
      if (adj[i].empty())
        throw IsolatedVertexError("vertex " + std::to_string(i) + " of mesh " + std::to_string(b) +
                                  " has no neighbors");
      Vec3 mean{};
      for (int64_t u : adj[i]) mean += verts[size_t(u)];
      double inv_deg = 1.0 / double(adj[i].size());
      mean *= inv_deg;
      Vec3 s = sign3(mean - verts[i]);  // L1 subgradient
      d_verts[size_t(off + int64_t(i))] -= s * coeff;
      for (int64_t u : adj[i]) d_verts[size_t(off + u)] += s * (coeff * inv_deg);
    }
  }
}

double silhouette_iou_loss(const std::vector<double>& s_pred, const std::vector<double>& s_gt) {
  if (s_pred.size() != s_gt.size()) throw ShapeError("silhouette_iou_loss: size mismatch");
  double inter = 0, uni = 0;
  for (size_t i = 0; i < s_pred.size(); ++i) {
    double pg = s_pred[i] * s_gt[i];
    inter += pg;
    uni += s_pred[i] + s_gt[i] - pg;
  }
  if (uni <= 0) return 0.0;  // two empty masks agree
  return 1.0 - inter / uni;
}

std::vector<double> silhouette_iou_loss_backward(const std::vector<double>& s_pred,
                                                 const std::vector<double>& s_gt, double d_loss) {
  if (s_pred.size() != s_gt.size()) throw ShapeError("silhouette_iou_loss_backward: size mismatch");
  double inter = 0, uni = 0;
  for (size_t i = 0; i < s_pred.size(); ++i) {
    double pg = s_pred[i] * s_gt[i];
    inter += pg;
    uni += s_pred[i] + s_gt[i] - pg;
  }
  std::vector<double> grad(s_pred.size(), 0.0);
  if (uni <= 0) return grad;
  // d(1 - I/U)/dp = -(g*U - I*(1-g)) / U^2
  for (size_t i = 0; i < s_pred.size(); ++i) {
    double g = s_gt[i];
    grad[i] = -d_loss * (g * uni - inter * (1.0 - g)) / (uni * uni);
  }
  return grad;
}

}  // namespace dr
