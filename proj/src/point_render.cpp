#include "dr/point_render.hpp"

#include <algorithm>
#include <cmath>

namespace dr {

namespace {

struct PointRec {
  int64_t point_id;  // packed id
  Vec2 xy;
  double z;
};

// project and cull identically for naive and tiled paths
std::vector<std::vector<PointRec>> prepare_points(const PointCloudBatch& pc, const Camera& c) {
  std::vector<NdcPoint> ndc = world_to_ndc(c, pc.points_packed().data);
  std::vector<std::vector<PointRec>> out(size_t(pc.size()));
  for (int b = 0; b < pc.size(); ++b) {
    for (int64_t i = pc.points_packed().offsets[size_t(b)];
         i < pc.points_packed().offsets[size_t(b + 1)]; ++i) {
      const NdcPoint& p = ndc[size_t(i)];
      if (p.clipped || p.z_view < c.znear) continue;
      out[size_t(b)].push_back({i, p.xy, p.z_view});
    }
  }
  return out;
}

struct Candidate {
  double z;
  int64_t point;
  double dist2;
  bool operator<(const Candidate& o) const { return z != o.z ? z < o.z : point < o.point; }
};

struct PixelHeap {
  std::vector<Candidate> data;
  int k;
  explicit PixelHeap(int k_) : k(k_) { data.reserve(size_t(k_)); }
  void reset() { data.clear(); }
  void offer(const Candidate& cand) {
    if (int(data.size()) < k) {
      data.push_back(cand);
      std::push_heap(data.begin(), data.end());
    } else if (cand < data.front()) {
      std::pop_heap(data.begin(), data.end());
      data.back() = cand;
      std::push_heap(data.begin(), data.end());
    }
  }
};

PointFragments alloc_fragments(const PointCloudBatch& pc, const PointRasterSettings& s) {
  PointFragments frag;
  frag.batch = pc.size();
  frag.h = s.image_h;
  frag.w = s.image_w;
  frag.k = s.points_per_pixel;
  frag.idx.assign(size_t(frag.slots()), -1);
  frag.zbuf.assign(size_t(frag.slots()), -1.0);
  frag.dists2.assign(size_t(frag.slots()), 0.0);
  return frag;
}

void emit_pixel(PointFragments& frag, int b, int i, int j, PixelHeap& heap) {
  std::sort(heap.data.begin(), heap.data.end());
  for (int s = 0; s < frag.k; ++s) {
    int64_t slot = ((int64_t(b) * frag.h + i) * frag.w + j) * frag.k + s;
    if (s < int(heap.data.size())) {
      frag.idx[size_t(slot)] = heap.data[size_t(s)].point;
      frag.zbuf[size_t(slot)] = heap.data[size_t(s)].z;
      frag.dists2[size_t(slot)] = heap.data[size_t(s)].dist2;
    }
  }
}

}  // namespace

PointFragments rasterize_points_naive(const PointCloudBatch& pc, const Camera& c,
                                      const PointRasterSettings& s) {
  PointFragments frag = alloc_fragments(pc, s);
  auto points = prepare_points(pc, c);
  double r2 = s.radius * s.radius;
  for (int b = 0; b < pc.size(); ++b) {
    const auto& pb = points[size_t(b)];
    parallel_for(int64_t(s.image_h) * s.image_w, [&](int64_t lo, int64_t hi) {
      PixelHeap heap(s.points_per_pixel);
      for (int64_t px = lo; px < hi; ++px) {
        int i = int(px / s.image_w), j = int(px % s.image_w);
        Vec2 pix = pixel_center_ndc(s.image_h, s.image_w, i, j);
        heap.reset();
        for (const PointRec& pr : pb) {
          double d2 = (pix - pr.xy).norm2();
          if (d2 <= r2) heap.offer({pr.z, pr.point_id, d2});
        }
        emit_pixel(frag, b, i, j, heap);
      }
    });
  }
  return frag;
}

PointFragments rasterize_points(const PointCloudBatch& pc, const Camera& c,
                                const PointRasterSettings& s) {
  PointFragments frag = alloc_fragments(pc, s);
  auto points = prepare_points(pc, c);
  double r2 = s.radius * s.radius;
  int tiles_x = (s.image_w + s.tile_size - 1) / s.tile_size;
  int tiles_y = (s.image_h + s.tile_size - 1) / s.tile_size;

  for (int b = 0; b < pc.size(); ++b) {
    const auto& pb = points[size_t(b)];
    std::vector<std::vector<int32_t>> bins(size_t(tiles_x * tiles_y));
    parallel_for(int64_t(tiles_x) * tiles_y, [&](int64_t lo, int64_t hi) {
      for (int64_t t = lo; t < hi; ++t) {
        int ty = int(t / tiles_x), tx = int(t % tiles_x);
        int i0 = ty * s.tile_size, i1 = std::min(s.image_h, i0 + s.tile_size) - 1;
        int j0 = tx * s.tile_size, j1 = std::min(s.image_w, j0 + s.tile_size) - 1;
        Vec2 tl = pixel_center_ndc(s.image_h, s.image_w, i0, j0);
        Vec2 br = pixel_center_ndc(s.image_h, s.image_w, i1, j1);
        double min_x = std::min(tl.x, br.x) - s.radius, max_x = std::max(tl.x, br.x) + s.radius;
        double min_y = std::min(tl.y, br.y) - s.radius, max_y = std::max(tl.y, br.y) + s.radius;
        auto& bin = bins[size_t(t)];
        for (size_t p = 0; p < pb.size(); ++p) {
          if (pb[p].xy.x < min_x || pb[p].xy.x > max_x || pb[p].xy.y < min_y || pb[p].xy.y > max_y)
            continue;
          bin.push_back(int32_t(p));
        }
      }
    });
    parallel_for(int64_t(tiles_x) * tiles_y, [&](int64_t lo, int64_t hi) {
      PixelHeap heap(s.points_per_pixel);
      for (int64_t t = lo; t < hi; ++t) {
        int ty = int(t / tiles_x), tx = int(t % tiles_x);
        const auto& bin = bins[size_t(t)];
        int i0 = ty * s.tile_size, i1 = std::min(s.image_h, i0 + s.tile_size);
        int j0 = tx * s.tile_size, j1 = std::min(s.image_w, j0 + s.tile_size);
        for (int i = i0; i < i1; ++i) {
          for (int j = j0; j < j1; ++j) {
            Vec2 pix = pixel_center_ndc(s.image_h, s.image_w, i, j);
            heap.reset();
            for (int32_t p : bin) {
              double d2 = (pix - pb[size_t(p)].xy).norm2();
              if (d2 <= r2) heap.offer({pb[size_t(p)].z, pb[size_t(p)].point_id, d2});
            }
            emit_pixel(frag, b, i, j, heap);
          }
        }
      }
    });
  }
  return frag;
}

std::vector<double> splat_opacity(const PointFragments& frag, double radius) {
  std::vector<double> alpha(size_t(frag.slots()), 0.0);
  double inv_r2 = 1.0 / (radius * radius);
  parallel_for(frag.slots(), [&](int64_t lo, int64_t hi) {
    for (int64_t slot = lo; slot < hi; ++slot) {
      if (frag.idx[size_t(slot)] < 0) continue;
      alpha[size_t(slot)] = 1.0 - frag.dists2[size_t(slot)] * inv_r2;
    }
  });
  return alpha;
}

std::vector<double> alpha_composite(const PointFragments& frag, const std::vector<double>& alphas,
                                    const std::vector<double>& features, int dim,
                                    const std::vector<double>& background) {
  int64_t npix = frag.slots() / frag.k;
  if (int64_t(alphas.size()) != frag.slots() || int64_t(features.size()) != frag.slots() * dim)
    throw ShapeError("alpha_composite: shape mismatch");
  std::vector<double> out(size_t(npix * dim), 0.0);
  parallel_for(npix, [&](int64_t lo, int64_t hi) {
    for (int64_t px = lo; px < hi; ++px) {
      double* o = out.data() + px * dim;
      bool any = false;
      double transmit = 1.0;
      for (int s = 0; s < frag.k; ++s) {
        int64_t slot = px * frag.k + s;
        if (frag.idx[size_t(slot)] < 0) continue;
        any = true;
        double w = alphas[size_t(slot)] * transmit;
        const double* f = features.data() + slot * dim;
        for (int d = 0; d < dim; ++d) o[d] += w * f[d];
        transmit *= 1.0 - alphas[size_t(slot)];
      }
      if (!any)
        for (int d = 0; d < dim; ++d) o[d] = background[size_t(d)];
    }
  });
  return out;
}

std::vector<double> norm_composite(const PointFragments& frag, const std::vector<double>& alphas,
                                   const std::vector<double>& features, int dim,
                                   const std::vector<double>& background) {
  int64_t npix = frag.slots() / frag.k;
  if (int64_t(alphas.size()) != frag.slots() || int64_t(features.size()) != frag.slots() * dim)
    throw ShapeError("norm_composite: shape mismatch");
  std::vector<double> out(size_t(npix * dim), 0.0);
  parallel_for(npix, [&](int64_t lo, int64_t hi) {
    for (int64_t px = lo; px < hi; ++px) {
      double* o = out.data() + px * dim;
      double asum = 0;
      for (int s = 0; s < frag.k; ++s) {
        int64_t slot = px * frag.k + s;
        if (frag.idx[size_t(slot)] < 0) continue;
        double a = alphas[size_t(slot)];
        asum += a;
        const double* f = features.data() + slot * dim;
        for (int d = 0; d < dim; ++d) o[d] += a * f[d];
      }
      if (asum > 0) {
        for (int d = 0; d < dim; ++d) o[d] /= asum;
      } else {
        for (int d = 0; d < dim; ++d) o[d] = background[size_t(d)];
      }
    }
  });
  return out;
}

CompositeGrads composite_backward(CompositeMode mode, const PointFragments& frag,
                                  const std::vector<double>& alphas,
                                  const std::vector<double>& features, int dim,
                                  const std::vector<double>& d_out) {
  int64_t npix = frag.slots() / frag.k;
  if (int64_t(alphas.size()) != frag.slots() || int64_t(features.size()) != frag.slots() * dim ||
      int64_t(d_out.size()) != npix * dim)
    throw ShapeError("composite_backward: shape mismatch");
  CompositeGrads g;
  g.d_alphas.assign(size_t(frag.slots()), 0.0);
  g.d_features.assign(size_t(frag.slots() * dim), 0.0);

  parallel_for(npix, [&](int64_t lo, int64_t hi) {
    for (int64_t px = lo; px < hi; ++px) {
      const double* dout = d_out.data() + px * dim;
      if (mode == CompositeMode::Norm) {
        double asum = 0;
        std::vector<double> num(size_t(dim), 0.0);
        for (int s = 0; s < frag.k; ++s) {
          int64_t slot = px * frag.k + s;
          if (frag.idx[size_t(slot)] < 0) continue;
          asum += alphas[size_t(slot)];
          const double* f = features.data() + slot * dim;
          for (int d = 0; d < dim; ++d) num[size_t(d)] += alphas[size_t(slot)] * f[d];
        }
        if (asum <= 0) continue;
        for (int s = 0; s < frag.k; ++s) {
          int64_t slot = px * frag.k + s;
          if (frag.idx[size_t(slot)] < 0) continue;
          const double* f = features.data() + slot * dim;
          double da = 0;
          for (int d = 0; d < dim; ++d) {
            // out_d = num_d / asum
            da += dout[d] * (f[d] * asum - num[size_t(d)]) / (asum * asum);
            g.d_features[size_t(slot * dim + d)] = dout[d] * alphas[size_t(slot)] / asum;
          }
          g.d_alphas[size_t(slot)] = da;
        }
      } else {
        // f_alpha = sum_i alpha_i T_i f_i with T_i = prod_{j<i} (1 - alpha_j)
        // d alpha_i gets the direct term plus occlusion of later slots
        std::vector<double> transmit(size_t(frag.k), 1.0);
        double t = 1.0;
        for (int s = 0; s < frag.k; ++s) {
          int64_t slot = px * frag.k + s;
          transmit[size_t(s)] = t;
          if (frag.idx[size_t(slot)] >= 0) t *= 1.0 - alphas[size_t(slot)];
        }
        for (int s = 0; s < frag.k; ++s) {
          int64_t slot = px * frag.k + s;
          if (frag.idx[size_t(slot)] < 0) continue;
          const double* f = features.data() + slot * dim;
          double da = 0;
          for (int d = 0; d < dim; ++d) {
            da += dout[d] * transmit[size_t(s)] * f[d];
            g.d_features[size_t(slot * dim + d)] =
                dout[d] * alphas[size_t(slot)] * transmit[size_t(s)];
          }
          // occlusion: later weights carry the factor (1 - alpha_s)
          double one_minus = 1.0 - alphas[size_t(slot)];
          for (int s2 = s + 1; s2 < frag.k; ++s2) {
            int64_t slot2 = px * frag.k + s2;
            if (frag.idx[size_t(slot2)] < 0) continue;
            double t2;  // prod_{j<s2, j!=s} (1 - alpha_j)
            if (std::abs(one_minus) > 1e-12) {
              t2 = transmit[size_t(s2)] / one_minus;
            } else {
              t2 = 1.0;
              for (int j = 0; j < s2; ++j) {
                if (j == s) continue;
                int64_t slotj = px * frag.k + j;
                if (frag.idx[size_t(slotj)] >= 0) t2 *= 1.0 - alphas[size_t(slotj)];
              }
            }
            const double* f2 = features.data() + slot2 * dim;
            double contrib = 0;
            for (int d = 0; d < dim; ++d) contrib += dout[d] * f2[d];
            da -= contrib * alphas[size_t(slot2)] * t2;
          }
          g.d_alphas[size_t(slot)] = da;
        }
      }
    }
  });
  return g;
}

std::vector<Vec3> splat_position_backward(const PointCloudBatch& pc, const Camera& c,
                                          const PointRasterSettings& s, const PointFragments& frag,
                                          const std::vector<double>& d_alphas) {
  if (int64_t(d_alphas.size()) != frag.slots())
    throw ShapeError("splat_position_backward: cotangent shape mismatch");
  std::vector<NdcPoint> ndc = world_to_ndc(c, pc.points_packed().data);
  double inv_r2 = 1.0 / (s.radius * s.radius);

  // per-point xy cotangents accumulated serially in slot order
  std::vector<Vec2> d_xy(size_t(pc.total_points()), Vec2{});
  for (int64_t slot = 0; slot < frag.slots(); ++slot) {
    int64_t pid = frag.idx[size_t(slot)];
    if (pid < 0) continue;
    double da = d_alphas[size_t(slot)];
    if (da == 0) continue;
    int64_t px = slot / frag.k;
    int b = int(px / (int64_t(frag.h) * frag.w));
    (void)b;
    int64_t rem = px % (int64_t(frag.h) * frag.w);
    Vec2 pix = pixel_center_ndc(frag.h, frag.w, int(rem / frag.w), int(rem % frag.w));
    // alpha = 1 - |c - pix|^2 / r^2  ->  d alpha / d c = -2 (c - pix) / r^2
    Vec2 gc = (ndc[size_t(pid)].xy - pix) * (-2.0 * inv_r2 * da);
    d_xy[size_t(pid)] += gc;
  }

  std::vector<Vec3> d_points(size_t(pc.total_points()), Vec3{});
  const auto& pts = pc.points_packed().data;
  parallel_for(pc.total_points(), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i)
      d_points[size_t(i)] = world_to_ndc_backward(c, pts[size_t(i)], d_xy[size_t(i)], 0.0);
  });
  return d_points;
}

}  // namespace dr
