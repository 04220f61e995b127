// Two-pass tiled soft rasterizer for heterogeneous mesh batches, plus the
// naive per-pixel-per-face oracle and the backward pass to vertex positions.
//
// Per pixel the rasterizer keeps the K nearest faces along view z whose
// signed squared xy-distance in NDC is within blur_radius. Fragment slots
// are sorted ascending in z with ties broken by smaller packed face id.
// dists is negative inside a face, positive outside, zero on the boundary.
#pragma once

#include <vector>

#include "dr/batching.hpp"
#include "dr/camera.hpp"
#include "dr/core.hpp"

namespace dr {

struct RasterSettings {
  int image_h = 64, image_w = 64;
  int faces_per_pixel = 1;       // K
  double blur_radius = 1e-4;     // squared NDC distance
  int tile_size = 16;            // pixels per bin side
};

// B x H x W x K fragment buffers, flat row-major. pix_to_face holds packed
// face ids, -1 for an empty slot. bary is the clamped-renormalized
// barycentric triple of the pixel center in the face.
struct MeshFragments {
  int batch = 0, h = 0, w = 0, k = 0;
  std::vector<int64_t> pix_to_face;
  std::vector<double> zbuf;
  std::vector<double> bary;   // ... x K x 3
  std::vector<double> dists;  // signed squared NDC distance

  int64_t slots() const { return int64_t(batch) * h * w * k; }
  int64_t slot(int b, int i, int j, int s) const {
    return ((int64_t(b) * h + i) * w + j) * k + s;
  }
};

MeshFragments rasterize_meshes(const MeshBatch& m, const Camera& c, const RasterSettings& s);
// Unbinned O(pixels * faces) loop with the identical contract; correctness
// oracle and benchmark baseline.
MeshFragments rasterize_meshes_naive(const MeshBatch& m, const Camera& c, const RasterSettings& s);

// Signed squared distance from p to the triangle boundary: negative inside,
// positive outside. A degenerate (collinear) triangle is treated as
// segments, always non-negative.
double point_triangle_dist2(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c);

// vjp of point_triangle_dist2 wrt the three vertices (nearest boundary
// feature and the inside/outside sign are frozen)
void point_triangle_dist2_backward(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c,
                                   double d_out, Vec2& d_a, Vec2& d_b, Vec2& d_c);

// Affine barycentrics of p in (a, b, c); throws DegenerateFaceError via
// the rasterizer path when the triangle has zero area.
Vec3 barycentric_coords(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c);
// clamp each coordinate to [0,1] and renormalize to sum 1
Vec3 clamp_barycentric(const Vec3& w);

// Cotangents on zbuf / bary / dists pulled back to packed world-space
// vertex positions. Slot membership is frozen; gradients chain through the
// barycentric Jacobian, the z interpolation and the signed-distance
// derivative, then through the camera to world coordinates.
std::vector<Vec3> rasterize_backward(const MeshBatch& m, const Camera& c, const RasterSettings& s,
                                     const MeshFragments& frag, const std::vector<double>& d_zbuf,
                                     const std::vector<double>& d_bary,
                                     const std::vector<double>& d_dists);

}  // namespace dr
