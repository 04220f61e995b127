// Point-splat rasterizer (K nearest points per pixel along z) and the two
// compositors, with backward passes to point positions, features and
// opacities.
#pragma once

#include <vector>

#include "dr/batching.hpp"
#include "dr/camera.hpp"
#include "dr/core.hpp"

namespace dr {

struct PointRasterSettings {
  int image_h = 64, image_w = 64;
  int points_per_pixel = 8;  // K
  double radius = 0.05;      // splat radius in NDC
  int tile_size = 16;
};

// B x H x W x K, flat. idx holds packed point ids, -1 empty. Occupied slots
// sorted ascending in z, ties by smaller point id; dists2 <= radius^2.
struct PointFragments {
  int batch = 0, h = 0, w = 0, k = 0;
  std::vector<int64_t> idx;
  std::vector<double> zbuf;
  std::vector<double> dists2;  // squared NDC distance pixel center -> splat center

  int64_t slots() const { return int64_t(batch) * h * w * k; }
};

PointFragments rasterize_points(const PointCloudBatch& pc, const Camera& c,
                                const PointRasterSettings& s);
PointFragments rasterize_points_naive(const PointCloudBatch& pc, const Camera& c,
                                      const PointRasterSettings& s);

// alpha = 1 - dists2 / radius^2; empty slots get 0
std::vector<double> splat_opacity(const PointFragments& frag, double radius);

// Eq-style compositors over per-slot features (dim doubles per slot).
// alpha_composite walks slots front to back with transparency; pixels keep
// the background feature where no slot exists.
std::vector<double> alpha_composite(const PointFragments& frag, const std::vector<double>& alphas,
                                    const std::vector<double>& features, int dim,
                                    const std::vector<double>& background);
// opacity-weighted mean, independent of slot order; background where the
// alpha sum vanishes
std::vector<double> norm_composite(const PointFragments& frag, const std::vector<double>& alphas,
                                   const std::vector<double>& features, int dim,
                                   const std::vector<double>& background);

enum class CompositeMode { Alpha, Norm };

struct CompositeGrads {
  std::vector<double> d_alphas;    // per slot
  std::vector<double> d_features;  // per slot x dim
};
CompositeGrads composite_backward(CompositeMode mode, const PointFragments& frag,
                                  const std::vector<double>& alphas,
                                  const std::vector<double>& features, int dim,
                                  const std::vector<double>& d_out);

// chains slot alpha cotangents through splat_opacity and the projection
// into packed world-space point positions
std::vector<Vec3> splat_position_backward(const PointCloudBatch& pc, const Camera& c,
                                          const PointRasterSettings& s, const PointFragments& frag,
                                          const std::vector<double>& d_alphas);

}  // namespace dr
