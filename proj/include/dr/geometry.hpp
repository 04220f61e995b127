// Batched geometric operators and losses over heterogeneous batches:
// exact KNN, Chamfer distance, graph convolution, surface sampling, mesh
// regularizers and the silhouette IoU loss, with hand-written backward
// passes for the differentiable ones.
#pragma once

#include <vector>

#include "dr/batching.hpp"
#include "dr/core.hpp"

namespace dr {

// ---------------------------------------------------------------------------
// KNN / Chamfer

// Per batch element: row-major |P_b| x K squared distances and indices into
// the element's own points of Q (local indices). idx = -1 where K exceeds
// the available points; dists there are +inf. Within a row, dists are
// nondecreasing with ties broken by smaller index.
struct KnnResult {
  int k = 0;
  std::vector<std::vector<double>> dists;   // element -> |P_b| * K
  std::vector<std::vector<int64_t>> idx;    // element -> |P_b| * K
};

KnnResult knn_points(const PointCloudBatch& p, const PointCloudBatch& q, int k);

// Generic-dimension variant over flat per-element arrays (row-major n x dim).
// Exercises the non-specialized path that backs D outside {2,3,4}.
KnnResult knn_points_nd(const std::vector<std::vector<double>>& p,
                        const std::vector<std::vector<double>>& q, int dim, int k);

struct ChamferResult {
  std::vector<double> per_element;
  double mean = 0;
  // retained nearest-neighbor assignments for the backward pass
  std::vector<std::vector<int64_t>> nn_p_to_q;  // per element, |P_b|
  std::vector<std::vector<int64_t>> nn_q_to_p;  // per element, |Q_b|
};

// Eq-style symmetric Chamfer: |P|^-1 sum ||p - nn(p)||^2 + |Q|^-1 sum ||q - nn(q)||^2,
// reduced by mean over batch elements. Computed through knn_points with K=1,
// never via a dense |P|x|Q| matrix.
ChamferResult chamfer_distance(const PointCloudBatch& p, const PointCloudBatch& q);

// Cotangent d_mean on the mean value pulled back to packed point positions
// of P and Q. The nearest-neighbor assignment is frozen.
void chamfer_backward(const PointCloudBatch& p, const PointCloudBatch& q,
                      const ChamferResult& res, double d_mean,
                      std::vector<Vec3>& d_p, std::vector<Vec3>& d_q);

// ---------------------------------------------------------------------------
// Graph convolution

struct GraphConvWeights {
  int d_in = 0, d_out = 0;
  std::vector<double> w0;    // d_in x d_out, row-major
  std::vector<double> w1;    // d_in x d_out
  std::vector<double> bias;  // d_out or empty
};

// Undirected edge list over packed vertex indices.
using EdgeList = std::vector<std::pair<int64_t, int64_t>>;

// f'_v = W0 f_v + sum_{u in N(v)} W1 f_u (+ bias). Neighbor lists are
// sorted so accumulation order is fixed.
std::vector<double> graph_conv(const std::vector<double>& features, int64_t num_verts,
                               const EdgeList& edges, const GraphConvWeights& w);

struct GraphConvGrads {
  std::vector<double> d_features;
  std::vector<double> d_w0, d_w1, d_bias;
};
GraphConvGrads graph_conv_backward(const std::vector<double>& features, int64_t num_verts,
                                   const EdgeList& edges, const GraphConvWeights& w,
                                   const std::vector<double>& d_out);

// Unique undirected edges of a mesh batch, packed indices, each pair
// (a, b) with a < b, sorted.
EdgeList mesh_edges_packed(const MeshBatch& m);

// ---------------------------------------------------------------------------
// Sampling and mesh losses

// n points per mesh, faces chosen proportionally to area, uniform
// barycentric placement. Deterministic per seed.
PointCloudBatch sample_points_from_meshes(const MeshBatch& m, int64_t n, uint64_t seed);

struct BatchLoss {
  std::vector<double> per_element;
  double mean = 0;
};

// mean squared length over unique undirected edges, per element
BatchLoss edge_length_loss(const MeshBatch& m);
void edge_length_loss_backward(const MeshBatch& m, double d_mean, std::vector<Vec3>& d_verts);

// || (D^-1 A - I) v ||_1 averaged over vertices, per element
BatchLoss laplacian_loss(const MeshBatch& m);
void laplacian_loss_backward(const MeshBatch& m, double d_mean, std::vector<Vec3>& d_verts);

// L_s = 1 - sum(pred*gt) / sum(pred + gt - pred*gt); both all-zero -> 0
double silhouette_iou_loss(const std::vector<double>& s_pred, const std::vector<double>& s_gt);
// gradient wrt s_pred only (gt is data)
std::vector<double> silhouette_iou_loss_backward(const std::vector<double>& s_pred,
                                                 const std::vector<double>& s_gt, double d_loss);

}  // namespace dr
