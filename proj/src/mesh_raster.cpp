#include "dr/mesh_raster.hpp"

#include <algorithm>
#include <cmath>

namespace dr {

namespace {

constexpr double kDegenerateArea = 1e-10;

double signed_area2(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b - a).cross(c - a);
}

// squared distance from p to segment [a,b] plus the projection parameter
double point_segment_dist2(const Vec2& p, const Vec2& a, const Vec2& b, double& t_out) {
  Vec2 ab = b - a;
  double len2 = ab.norm2();
  double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  Vec2 q = a + ab * t;
  t_out = t;
  return (p - q).norm2();
}

bool inside_triangle(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  double area = signed_area2(a, b, c);
  if (std::abs(area) < kDegenerateArea) return false;
  double e0 = signed_area2(a, b, p);
  double e1 = signed_area2(b, c, p);
  double e2 = signed_area2(c, a, p);
  if (area > 0) return e0 >= 0 && e1 >= 0 && e2 >= 0;
  return e0 <= 0 && e1 <= 0 && e2 <= 0;
}

}  // namespace

double point_triangle_dist2(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  double t;
  double d = point_segment_dist2(p, a, b, t);
  d = std::min(d, point_segment_dist2(p, b, c, t));
  d = std::min(d, point_segment_dist2(p, c, a, t));
  return inside_triangle(p, a, b, c) ? -d : d;
}

void point_triangle_dist2_backward(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c,
                                   double d_out, Vec2& d_a, Vec2& d_b, Vec2& d_c) {
  const Vec2* verts[3] = {&a, &b, &c};
  Vec2* grads[3] = {&d_a, &d_b, &d_c};
  double best = 0, best_t = 0;
  int best_e = -1;
  for (int e = 0; e < 3; ++e) {
    double t;
    double d = point_segment_dist2(p, *verts[e], *verts[(e + 1) % 3], t);
    if (best_e < 0 || d < best) {
      best = d;
      best_t = t;
      best_e = e;
    }
  }
  double sign = inside_triangle(p, a, b, c) ? -1.0 : 1.0;
  const Vec2& ea = *verts[best_e];
  const Vec2& eb = *verts[(best_e + 1) % 3];
  // envelope: t (and the chosen edge, and the sign) are frozen
  Vec2 q = ea + (eb - ea) * best_t;
  Vec2 g = (q - p) * (2.0 * sign * d_out);
  *grads[best_e] += g * (1.0 - best_t);
  *grads[(best_e + 1) % 3] += g * best_t;
}

Vec3 barycentric_coords(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  double area = signed_area2(a, b, c);
  double w0 = signed_area2(p, b, c) / area;
  double w1 = signed_area2(p, c, a) / area;
  double w2 = signed_area2(p, a, b) / area;
  return {w0, w1, w2};
}

Vec3 clamp_barycentric(const Vec3& w) {
  Vec3 t{std::clamp(w.x, 0.0, 1.0), std::clamp(w.y, 0.0, 1.0), std::clamp(w.z, 0.0, 1.0)};
  double s = t.x + t.y + t.z;
  if (s <= 0) return {1.0 / 3, 1.0 / 3, 1.0 / 3};
  return t * (1.0 / s);
}

namespace {

// one projected face ready for rasterization; ids ascend within each element
struct FaceRec {
  int64_t face_id;  // packed id
  Vec2 v[3];        // NDC
  double z[3];      // view depth
  Vec2 bb_min, bb_max;
};

// Projects and culls faces identically for the naive and tiled paths:
// drop faces with a clipped vertex, faces fully behind znear, and
// degenerate (near-zero NDC area) faces. Bounding boxes are inflated by
// sqrt(blur_radius) so every pixel a face can influence lands inside.
std::vector<std::vector<FaceRec>> prepare_faces(const MeshBatch& m, const Camera& c,
                                                const RasterSettings& s) {
  std::vector<NdcPoint> ndc = world_to_ndc(c, m.verts_packed().data);
  double inflate = std::sqrt(std::max(0.0, s.blur_radius));
  std::vector<std::vector<FaceRec>> out(size_t(m.size()));
  for (int b = 0; b < m.size(); ++b) {
    const auto& fp = m.faces_packed();
    for (int64_t f = fp.offsets[size_t(b)]; f < fp.offsets[size_t(b + 1)]; ++f) {
      const Face& face = fp.data[size_t(f)];
      const NdcPoint& p0 = ndc[size_t(face.a)];
      const NdcPoint& p1 = ndc[size_t(face.b)];
      const NdcPoint& p2 = ndc[size_t(face.c)];
      if (p0.clipped || p1.clipped || p2.clipped) continue;
      if (p0.z_view < c.znear && p1.z_view < c.znear && p2.z_view < c.znear) continue;
      if (std::abs(signed_area2(p0.xy, p1.xy, p2.xy)) < kDegenerateArea) continue;
      FaceRec rec;
      rec.face_id = f;
      rec.v[0] = p0.xy;
      rec.v[1] = p1.xy;
      rec.v[2] = p2.xy;
      rec.z[0] = p0.z_view;
      rec.z[1] = p1.z_view;
      rec.z[2] = p2.z_view;
      rec.bb_min = {std::min({p0.xy.x, p1.xy.x, p2.xy.x}) - inflate,
                    std::min({p0.xy.y, p1.xy.y, p2.xy.y}) - inflate};
      rec.bb_max = {std::max({p0.xy.x, p1.xy.x, p2.xy.x}) + inflate,
                    std::max({p0.xy.y, p1.xy.y, p2.xy.y}) + inflate};
      out[size_t(b)].push_back(rec);
    }
  }
  return out;
}

struct Candidate {
  double z;
  int64_t face;
  Vec3 bary;
  double dist;
  bool operator<(const Candidate& o) const {
    return z != o.z ? z < o.z : face < o.face;
  }
};

// Bounded max-heap selection of the K nearest candidates by (z, face id).
struct PixelHeap {
  std::vector<Candidate> data;
  int k;
  explicit PixelHeap(int k_) : k(k_) { data.reserve(size_t(k_)); }
  void reset() { data.clear(); }
  void offer(const Candidate& cand) {
    auto cmp = [](const Candidate& x, const Candidate& y) { return x < y; };
    if (int(data.size()) < k) {
      data.push_back(cand);
      std::push_heap(data.begin(), data.end(), cmp);
    } else if (cand < data.front()) {
      std::pop_heap(data.begin(), data.end(), cmp);
      data.back() = cand;
      std::push_heap(data.begin(), data.end(), cmp);
    }
  }
  // ascending (z, face)
  void sorted() { std::sort(data.begin(), data.end()); }
};

// Tests one face against one pixel; pushes a candidate when the face can
// influence it.
inline void test_pixel_face(const Vec2& pix, const FaceRec& fr, const Camera& c,
                            const RasterSettings& s, PixelHeap& heap) {
  if (pix.x < fr.bb_min.x || pix.x > fr.bb_max.x || pix.y < fr.bb_min.y || pix.y > fr.bb_max.y)
    return;
  double dist = point_triangle_dist2(pix, fr.v[0], fr.v[1], fr.v[2]);
  if (dist > s.blur_radius) return;
  Vec3 bary = clamp_barycentric(barycentric_coords(pix, fr.v[0], fr.v[1], fr.v[2]));
  double z = bary.x * fr.z[0] + bary.y * fr.z[1] + bary.z * fr.z[2];
  if (z < c.znear) return;  // per-pixel z check for straddling faces
  heap.offer({z, fr.face_id, bary, dist});
}

void emit_pixel(const MeshFragments& dims, MeshFragments& frag, int b, int i, int j,
                PixelHeap& heap) {
  heap.sorted();
  for (int s2 = 0; s2 < dims.k; ++s2) {
    int64_t slot = frag.slot(b, i, j, s2);
    if (s2 < int(heap.data.size())) {
      const Candidate& cand = heap.data[size_t(s2)];
      frag.pix_to_face[size_t(slot)] = cand.face;
      frag.zbuf[size_t(slot)] = cand.z;
      frag.bary[size_t(slot * 3 + 0)] = cand.bary.x;
      frag.bary[size_t(slot * 3 + 1)] = cand.bary.y;
      frag.bary[size_t(slot * 3 + 2)] = cand.bary.z;
      frag.dists[size_t(slot)] = cand.dist;
    } else {
      frag.pix_to_face[size_t(slot)] = -1;
      frag.zbuf[size_t(slot)] = -1.0;
      frag.dists[size_t(slot)] = 0.0;
    }
  }
}

MeshFragments alloc_fragments(const MeshBatch& m, const RasterSettings& s) {
  MeshFragments frag;
  frag.batch = m.size();
  frag.h = s.image_h;
  frag.w = s.image_w;
  frag.k = s.faces_per_pixel;
  frag.pix_to_face.assign(size_t(frag.slots()), -1);
  frag.zbuf.assign(size_t(frag.slots()), -1.0);
  frag.bary.assign(size_t(frag.slots() * 3), 0.0);
  frag.dists.assign(size_t(frag.slots()), 0.0);
  return frag;
}

}  // namespace

MeshFragments rasterize_meshes_naive(const MeshBatch& m, const Camera& c,
                                     const RasterSettings& s) {
  MeshFragments frag = alloc_fragments(m, s);
  auto faces = prepare_faces(m, c, s);
  for (int b = 0; b < m.size(); ++b) {
    const auto& fb = faces[size_t(b)];
    parallel_for(int64_t(s.image_h) * s.image_w, [&](int64_t lo, int64_t hi) {
      PixelHeap heap(s.faces_per_pixel);
      for (int64_t px = lo; px < hi; ++px) {
        int i = int(px / s.image_w), j = int(px % s.image_w);
        Vec2 pix = pixel_center_ndc(s.image_h, s.image_w, i, j);
        heap.reset();
        for (const FaceRec& fr : fb) test_pixel_face(pix, fr, c, s, heap);
        emit_pixel(frag, frag, b, i, j, heap);
      }
    });
  }
  return frag;
}

MeshFragments rasterize_meshes(const MeshBatch& m, const Camera& c, const RasterSettings& s) {
  MeshFragments frag = alloc_fragments(m, s);
  auto faces = prepare_faces(m, c, s);
  int tiles_x = (s.image_w + s.tile_size - 1) / s.tile_size;
  int tiles_y = (s.image_h + s.tile_size - 1) / s.tile_size;

  for (int b = 0; b < m.size(); ++b) {
    const auto& fb = faces[size_t(b)];
    // pass 1: bin faces by tile. Parallel over tiles; each bin stays in
    // ascending face order because fb is ordered.
    std::vector<std::vector<int32_t>> bins(size_t(tiles_x * tiles_y));
    parallel_for(int64_t(tiles_x) * tiles_y, [&](int64_t lo, int64_t hi) {
      for (int64_t t = lo; t < hi; ++t) {
        int ty = int(t / tiles_x), tx = int(t % tiles_x);
        // NDC rect covered by the tile's pixel centers
        int i0 = ty * s.tile_size, i1 = std::min(s.image_h, i0 + s.tile_size) - 1;
        int j0 = tx * s.tile_size, j1 = std::min(s.image_w, j0 + s.tile_size) - 1;
        Vec2 tl = pixel_center_ndc(s.image_h, s.image_w, i0, j0);
        Vec2 br = pixel_center_ndc(s.image_h, s.image_w, i1, j1);
        double min_x = std::min(tl.x, br.x), max_x = std::max(tl.x, br.x);
        double min_y = std::min(tl.y, br.y), max_y = std::max(tl.y, br.y);
        auto& bin = bins[size_t(t)];
        for (size_t f = 0; f < fb.size(); ++f) {
          const FaceRec& fr = fb[f];
          if (fr.bb_max.x < min_x || fr.bb_min.x > max_x || fr.bb_max.y < min_y ||
              fr.bb_min.y > max_y)
            continue;
          bin.push_back(int32_t(f));
        }
      }
    });
    // pass 2: per pixel, scan only the tile's bin
    parallel_for(int64_t(tiles_x) * tiles_y, [&](int64_t lo, int64_t hi) {
      PixelHeap heap(s.faces_per_pixel);
      for (int64_t t = lo; t < hi; ++t) {
        int ty = int(t / tiles_x), tx = int(t % tiles_x);
        const auto& bin = bins[size_t(t)];
        int i0 = ty * s.tile_size, i1 = std::min(s.image_h, i0 + s.tile_size);
        int j0 = tx * s.tile_size, j1 = std::min(s.image_w, j0 + s.tile_size);
        for (int i = i0; i < i1; ++i) {
          for (int j = j0; j < j1; ++j) {
            Vec2 pix = pixel_center_ndc(s.image_h, s.image_w, i, j);
            heap.reset();
            for (int32_t f : bin) test_pixel_face(pix, fb[size_t(f)], c, s, heap);
            emit_pixel(frag, frag, b, i, j, heap);
          }
        }
      }
    });
  }
  return frag;
}

namespace {

// vjp of the raw affine barycentrics wrt the triangle's NDC vertices
void barycentric_backward(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c,
                          const Vec3& d_w, Vec2& d_a, Vec2& d_b, Vec2& d_c) {
  double area = signed_area2(a, b, c);
  Vec3 w = barycentric_coords(p, a, b, c);
  Vec2 grad_d_a = (b - c).perp();
  Vec2 grad_d_b = (c - a).perp();
  Vec2 grad_d_c = (a - b).perp();
  // numerators: n0 = E(p,b,c), n1 = E(p,c,a), n2 = E(p,a,b)
  Vec2 gn0_b = (c - p).perp(), gn0_c = (p - b).perp();
  Vec2 gn1_c = (a - p).perp(), gn1_a = (p - c).perp();
  Vec2 gn2_a = (b - p).perp(), gn2_b = (p - a).perp();
  double inv = 1.0 / area;
  // w_i = n_i / D -> dw_i = (dn_i - w_i dD) / D
  d_a += (gn1_a * d_w.y + gn2_a * d_w.z - grad_d_a * (w.x * d_w.x + w.y * d_w.y + w.z * d_w.z)) * inv;
  d_b += (gn0_b * d_w.x + gn2_b * d_w.z - grad_d_b * (w.x * d_w.x + w.y * d_w.y + w.z * d_w.z)) * inv;
  d_c += (gn0_c * d_w.x + gn1_c * d_w.y - grad_d_c * (w.x * d_w.x + w.y * d_w.y + w.z * d_w.z)) * inv;
}

// vjp of clamp + renormalize
Vec3 clamp_barycentric_backward(const Vec3& w_raw, const Vec3& d_clamped) {
  double t[3] = {std::clamp(w_raw.x, 0.0, 1.0), std::clamp(w_raw.y, 0.0, 1.0),
                 std::clamp(w_raw.z, 0.0, 1.0)};
  double s = t[0] + t[1] + t[2];
  if (s <= 0) return {};
  double hat[3] = {t[0] / s, t[1] / s, t[2] / s};
  double dc[3] = {d_clamped.x, d_clamped.y, d_clamped.z};
  double dot = dc[0] * hat[0] + dc[1] * hat[1] + dc[2] * hat[2];
  double wr[3] = {w_raw.x, w_raw.y, w_raw.z};
  Vec3 out{};
  double* po = &out.x;
  for (int i = 0; i < 3; ++i) {
    double d_t = (dc[i] - dot) / s;
    po[i] = (wr[i] > 0.0 && wr[i] < 1.0) ? d_t : 0.0;
  }
  return out;
}

}  // namespace

std::vector<Vec3> rasterize_backward(const MeshBatch& m, const Camera& c, const RasterSettings& s,
                                     const MeshFragments& frag, const std::vector<double>& d_zbuf,
                                     const std::vector<double>& d_bary,
                                     const std::vector<double>& d_dists) {
  int64_t ns = frag.slots();
  if (int64_t(d_zbuf.size()) != ns || int64_t(d_dists.size()) != ns ||
      int64_t(d_bary.size()) != ns * 3)
    throw ShapeError("rasterize_backward: cotangent shapes do not match fragments");

  std::vector<NdcPoint> ndc = world_to_ndc(c, m.verts_packed().data);
  const auto& faces = m.faces_packed().data;

  // per-slot vertex cotangents, written disjointly in parallel
  std::vector<Vec2> slot_dxy(size_t(ns * 3), Vec2{});
  std::vector<double> slot_dz(size_t(ns * 3), 0.0);

  parallel_for(ns, [&](int64_t lo, int64_t hi) {
    for (int64_t slot = lo; slot < hi; ++slot) {
      int64_t fid = frag.pix_to_face[size_t(slot)];
      if (fid < 0) continue;
      const Face& face = faces[size_t(fid)];
      Vec2 v[3] = {ndc[size_t(face.a)].xy, ndc[size_t(face.b)].xy, ndc[size_t(face.c)].xy};
      double z[3] = {ndc[size_t(face.a)].z_view, ndc[size_t(face.b)].z_view,
                     ndc[size_t(face.c)].z_view};
      int64_t pix = slot / frag.k;
      int b = int(pix / (int64_t(frag.h) * frag.w));
      int64_t rem = pix % (int64_t(frag.h) * frag.w);
      (void)b;
      Vec2 p = pixel_center_ndc(frag.h, frag.w, int(rem / frag.w), int(rem % frag.w));

      Vec3 w_hat{frag.bary[size_t(slot * 3 + 0)], frag.bary[size_t(slot * 3 + 1)],
                 frag.bary[size_t(slot * 3 + 2)]};
      double dz = d_zbuf[size_t(slot)];
      // cotangent on the clamped bary: direct input plus the z-interpolation path
      Vec3 d_hat{d_bary[size_t(slot * 3 + 0)] + dz * z[0],
                 d_bary[size_t(slot * 3 + 1)] + dz * z[1],
                 d_bary[size_t(slot * 3 + 2)] + dz * z[2]};
      Vec3 w_raw = barycentric_coords(p, v[0], v[1], v[2]);
      Vec3 d_raw = clamp_barycentric_backward(w_raw, d_hat);

      Vec2 dxy[3] = {};
      barycentric_backward(p, v[0], v[1], v[2], d_raw, dxy[0], dxy[1], dxy[2]);
      point_triangle_dist2_backward(p, v[0], v[1], v[2], d_dists[size_t(slot)], dxy[0], dxy[1],
                                    dxy[2]);
      for (int i = 0; i < 3; ++i) {
        slot_dxy[size_t(slot * 3 + i)] = dxy[i];
        slot_dz[size_t(slot * 3 + i)] = dz * (&w_hat.x)[i];
      }
    }
  });

  // serial scatter in slot order keeps the reduction deterministic
  std::vector<Vec2> vert_dxy(size_t(m.total_verts()), Vec2{});
  std::vector<double> vert_dz(size_t(m.total_verts()), 0.0);
  for (int64_t slot = 0; slot < ns; ++slot) {
    int64_t fid = frag.pix_to_face[size_t(slot)];
    if (fid < 0) continue;
    const Face& face = faces[size_t(fid)];
    int64_t vid[3] = {face.a, face.b, face.c};
    for (int i = 0; i < 3; ++i) {
      vert_dxy[size_t(vid[i])] += slot_dxy[size_t(slot * 3 + i)];
      vert_dz[size_t(vid[i])] += slot_dz[size_t(slot * 3 + i)];
    }
  }

  std::vector<Vec3> d_verts(size_t(m.total_verts()), Vec3{});
  const auto& verts = m.verts_packed().data;
  parallel_for(m.total_verts(), [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      d_verts[size_t(i)] =
          world_to_ndc_backward(c, verts[size_t(i)], vert_dxy[size_t(i)], vert_dz[size_t(i)]);
    }
  });
  return d_verts;
}

}  // namespace dr
