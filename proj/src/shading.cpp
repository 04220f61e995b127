#include "dr/shading.hpp"

#include <algorithm>
#include <cmath>

namespace dr {

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}

std::vector<double> interpolate_face_attributes(const MeshBatch& m, const MeshFragments& frag,
                                                const std::vector<double>& attrs, int dim) {
  if (int64_t(attrs.size()) != m.total_verts() * dim)
    throw ShapeError("interpolate_face_attributes: attrs not aligned with packed verts");
  const auto& faces = m.faces_packed().data;
  std::vector<double> out(size_t(frag.slots() * dim), 0.0);
  parallel_for(frag.slots(), [&](int64_t lo, int64_t hi) {
    for (int64_t slot = lo; slot < hi; ++slot) {
      int64_t fid = frag.pix_to_face[size_t(slot)];
      if (fid < 0) continue;
      const Face& f = faces[size_t(fid)];
      int64_t vid[3] = {f.a, f.b, f.c};
      for (int i = 0; i < 3; ++i) {
        double w = frag.bary[size_t(slot * 3 + i)];
        const double* a = attrs.data() + vid[i] * dim;
        double* o = out.data() + slot * dim;
        for (int d = 0; d < dim; ++d) o[d] += w * a[d];
      }
    }
  });
  return out;
}

InterpolateGrads interpolate_face_attributes_backward(const MeshBatch& m, const MeshFragments& frag,
                                                      const std::vector<double>& attrs, int dim,
                                                      const std::vector<double>& d_out) {
  if (int64_t(d_out.size()) != frag.slots() * dim)
    throw ShapeError("interpolate_face_attributes_backward: cotangent shape mismatch");
  const auto& faces = m.faces_packed().data;
  InterpolateGrads g;
  g.d_attrs.assign(size_t(m.total_verts() * dim), 0.0);
  g.d_bary.assign(size_t(frag.slots() * 3), 0.0);
  parallel_for(frag.slots(), [&](int64_t lo, int64_t hi) {
    for (int64_t slot = lo; slot < hi; ++slot) {
      int64_t fid = frag.pix_to_face[size_t(slot)];
      if (fid < 0) continue;
      const Face& f = faces[size_t(fid)];
      int64_t vid[3] = {f.a, f.b, f.c};
      const double* dout = d_out.data() + slot * dim;
      for (int i = 0; i < 3; ++i) {
        const double* a = attrs.data() + vid[i] * dim;
        double s = 0;
        for (int d = 0; d < dim; ++d) s += dout[d] * a[d];
        g.d_bary[size_t(slot * 3 + i)] = s;
      }
    }
  });
  // attr scatter runs serially in slot order
  for (int64_t slot = 0; slot < frag.slots(); ++slot) {
    int64_t fid = frag.pix_to_face[size_t(slot)];
    if (fid < 0) continue;
    const Face& f = faces[size_t(fid)];
    int64_t vid[3] = {f.a, f.b, f.c};
    const double* dout = d_out.data() + slot * dim;
    for (int i = 0; i < 3; ++i) {
      double w = frag.bary[size_t(slot * 3 + i)];
      double* ga = g.d_attrs.data() + vid[i] * dim;
      for (int d = 0; d < dim; ++d) ga[d] += w * dout[d];
    }
  }
  return g;
}

std::vector<double> silhouette_blend(const MeshFragments& frag, double sigma) {
  int64_t npix = frag.slots() / frag.k;
  std::vector<double> alpha(size_t(npix), 0.0);
  parallel_for(npix, [&](int64_t lo, int64_t hi) {
    for (int64_t px = lo; px < hi; ++px) {
      double keep = 1.0;
      for (int s = 0; s < frag.k; ++s) {
        int64_t slot = px * frag.k + s;
        if (frag.pix_to_face[size_t(slot)] < 0) continue;
        double prob = sigmoid(-frag.dists[size_t(slot)] / sigma);
        keep *= 1.0 - prob;
      }
      alpha[size_t(px)] = 1.0 - keep;
    }
  });
  return alpha;
}

std::vector<double> silhouette_blend_backward(const MeshFragments& frag, double sigma,
                                              const std::vector<double>& d_alpha) {
  int64_t npix = frag.slots() / frag.k;
  if (int64_t(d_alpha.size()) != npix)
    throw ShapeError("silhouette_blend_backward: cotangent shape mismatch");
  std::vector<double> d_dists(size_t(frag.slots()), 0.0);
  parallel_for(npix, [&](int64_t lo, int64_t hi) {
    for (int64_t px = lo; px < hi; ++px) {
      double da = d_alpha[size_t(px)];
      if (da == 0) continue;
      for (int s = 0; s < frag.k; ++s) {
        int64_t slot = px * frag.k + s;
        if (frag.pix_to_face[size_t(slot)] < 0) continue;
        double prob_s = sigmoid(-frag.dists[size_t(slot)] / sigma);
        // product over the other occupied slots
        double rest = 1.0;
        for (int s2 = 0; s2 < frag.k; ++s2) {
          if (s2 == s) continue;
          int64_t slot2 = px * frag.k + s2;
          if (frag.pix_to_face[size_t(slot2)] < 0) continue;
          rest *= 1.0 - sigmoid(-frag.dists[size_t(slot2)] / sigma);
        }
        // d alpha / d prob_s = rest; d prob / d dist = -p(1-p)/sigma
        d_dists[size_t(slot)] = da * rest * (-prob_s * (1.0 - prob_s) / sigma);
      }
    }
  });
  return d_dists;
}

std::vector<Vec3> softmax_blend(const MeshFragments& frag, const std::vector<Vec3>& colors,
                                const BlendParams& p, double znear, double zfar) {
  if (int64_t(colors.size()) != frag.slots())
    throw ShapeError("softmax_blend: colors shape mismatch");
  int64_t npix = frag.slots() / frag.k;
  std::vector<Vec3> image(size_t(npix), p.background_color);
  double zrange = zfar - znear;
  parallel_for(npix, [&](int64_t lo, int64_t hi) {
    for (int64_t px = lo; px < hi; ++px) {
      double zinv_max = -1.0;
      bool any = false;
      for (int s = 0; s < frag.k; ++s) {
        int64_t slot = px * frag.k + s;
        if (frag.pix_to_face[size_t(slot)] < 0) continue;
        any = true;
        double z = std::clamp(frag.zbuf[size_t(slot)], znear, zfar);
        zinv_max = std::max(zinv_max, (zfar - z) / zrange);
      }
      if (!any) continue;
      double wsum = 0;
      Vec3 acc{};
      for (int s = 0; s < frag.k; ++s) {
        int64_t slot = px * frag.k + s;
        if (frag.pix_to_face[size_t(slot)] < 0) continue;
        double prob = sigmoid(-frag.dists[size_t(slot)] / p.sigma);
        double z = std::clamp(frag.zbuf[size_t(slot)], znear, zfar);
        double zinv = (zfar - z) / zrange;
        double w = prob * std::exp((zinv - zinv_max) / p.gamma);
        wsum += w;
        acc += colors[size_t(slot)] * w;
      }
      image[size_t(px)] = acc * (1.0 / wsum);
    }
  });
  return image;
}

SoftmaxBlendGrads softmax_blend_backward(const MeshFragments& frag, const std::vector<Vec3>& colors,
                                         const BlendParams& p, double znear, double zfar,
                                         const std::vector<Vec3>& d_image) {
  int64_t npix = frag.slots() / frag.k;
  if (int64_t(d_image.size()) != npix)
    throw ShapeError("softmax_blend_backward: cotangent shape mismatch");
  SoftmaxBlendGrads g;
  g.d_colors.assign(size_t(frag.slots()), Vec3{});
  g.d_dists.assign(size_t(frag.slots()), 0.0);
  g.d_zbuf.assign(size_t(frag.slots()), 0.0);
  double zrange = zfar - znear;
  parallel_for(npix, [&](int64_t lo, int64_t hi) {
    std::vector<double> w(size_t(frag.k)), prob(size_t(frag.k)), zinv(size_t(frag.k));
    std::vector<bool> occ(size_t(frag.k)), clamped(size_t(frag.k));
    for (int64_t px = lo; px < hi; ++px) {
      const Vec3& dimg = d_image[size_t(px)];
      double zinv_max = -1.0;
      int argmax = -1;
      bool any = false;
      for (int s = 0; s < frag.k; ++s) {
        int64_t slot = px * frag.k + s;
        occ[size_t(s)] = frag.pix_to_face[size_t(slot)] >= 0;
        if (!occ[size_t(s)]) continue;
        any = true;
        double zb = frag.zbuf[size_t(slot)];
        clamped[size_t(s)] = zb < znear || zb > zfar;
        double z = std::clamp(zb, znear, zfar);
        zinv[size_t(s)] = (zfar - z) / zrange;
        if (zinv[size_t(s)] > zinv_max) {
          zinv_max = zinv[size_t(s)];
          argmax = s;
        }
      }
      if (!any) continue;
      double wsum = 0;
      for (int s = 0; s < frag.k; ++s) {
        if (!occ[size_t(s)]) continue;
        int64_t slot = px * frag.k + s;
        prob[size_t(s)] = sigmoid(-frag.dists[size_t(slot)] / p.sigma);
        w[size_t(s)] = prob[size_t(s)] * std::exp((zinv[size_t(s)] - zinv_max) / p.gamma);
        wsum += w[size_t(s)];
      }
      // image = sum_k (w_k / wsum) c_k
      double d_zinv_max = 0;
      for (int s = 0; s < frag.k; ++s) {
        if (!occ[size_t(s)]) continue;
        int64_t slot = px * frag.k + s;
        double what = w[size_t(s)] / wsum;
        g.d_colors[size_t(slot)] = dimg * what;
        // d image / d w_k = (c_k - image) / wsum
        double d_what = dimg.dot(colors[size_t(slot)]);
        double mean_term = 0;
        for (int s2 = 0; s2 < frag.k; ++s2) {
          if (!occ[size_t(s2)]) continue;
          mean_term += dimg.dot(colors[size_t(px * frag.k + s2)]) * (w[size_t(s2)] / wsum);
        }
        double d_w = (d_what - mean_term) / wsum;
        // w = prob * exp((zinv - zinv_max)/gamma)
        double d_prob = d_w * w[size_t(s)] / prob[size_t(s)];
        double d_zinv = d_w * w[size_t(s)] / p.gamma;
        d_zinv_max += -d_w * w[size_t(s)] / p.gamma;
        g.d_dists[size_t(slot)] =
            d_prob * (-prob[size_t(s)] * (1.0 - prob[size_t(s)]) / p.sigma);
        if (!clamped[size_t(s)]) g.d_zbuf[size_t(slot)] += d_zinv * (-1.0 / zrange);
      }
      if (argmax >= 0 && !clamped[size_t(argmax)])
        g.d_zbuf[size_t(px * frag.k + argmax)] += d_zinv_max * (-1.0 / zrange);
    }
  });
  return g;
}

std::vector<Vec3> hard_blend(const MeshFragments& frag, const std::vector<Vec3>& colors,
                             const Vec3& background) {
  if (int64_t(colors.size()) != frag.slots()) throw ShapeError("hard_blend: colors shape mismatch");
  int64_t npix = frag.slots() / frag.k;
  std::vector<Vec3> image(size_t(npix), background);
  parallel_for(npix, [&](int64_t lo, int64_t hi) {
    for (int64_t px = lo; px < hi; ++px) {
      int64_t slot = px * frag.k;
      if (frag.pix_to_face[size_t(slot)] >= 0 && frag.dists[size_t(slot)] < 0)
        image[size_t(px)] = colors[size_t(slot)];
    }
  });
  return image;
}

std::vector<Vec3> vertex_normals(const MeshBatch& m) {
  std::vector<Vec3> normals(size_t(m.total_verts()), Vec3{});
  const auto& verts = m.verts_packed().data;
  // serial face loop: scatter-add in fixed order
  for (const Face& f : m.faces_packed().data) {
    Vec3 n = (verts[size_t(f.b)] - verts[size_t(f.a)]).cross(verts[size_t(f.c)] - verts[size_t(f.a)]);
    normals[size_t(f.a)] += n;  // cross product length already weights by area
    normals[size_t(f.b)] += n;
    normals[size_t(f.c)] += n;
  }
  for (Vec3& n : normals) n = n.normalized();
  return normals;
}

namespace {

// ambient + diffuse * max(0, n.l) + specular * max(0, r.v)^shininess,
// componentwise with the surface color. The camera looks down +z, so the
// surface-to-viewer direction is -z in view space.
Vec3 light_color(const DirectionalLight& light, const Vec3& n, const Vec3& surface) {
  double ndl = std::max(0.0, n.dot(light.direction));
  Vec3 r = 2.0 * n.dot(light.direction) * n - light.direction;
  double rv = std::max(0.0, r.dot(Vec3{0, 0, -1}));
  double spec = ndl > 0 ? std::pow(rv, light.shininess) : 0.0;
  Vec3 intensity = light.ambient + light.diffuse * ndl + light.specular * spec;
  return {intensity.x * surface.x, intensity.y * surface.y, intensity.z * surface.z};
}

}  // namespace

std::vector<Vec3> shade(LightingModel model, const MeshBatch& m, const Camera& c,
                        const MeshFragments& frag, const DirectionalLight& light,
                        const std::vector<Vec3>& vertex_colors) {
  if (int64_t(vertex_colors.size()) != m.total_verts())
    throw ShapeError("shade: vertex_colors not aligned with packed verts");
  const auto& verts = m.verts_packed().data;
  const auto& faces = m.faces_packed().data;

  // lighting happens in view space; rotate normals, keep light.direction as given
  std::vector<Vec3> vnormals = vertex_normals(m);
  for (Vec3& n : vnormals) n = c.rotation.apply(n);

  std::vector<Vec3> out(size_t(frag.slots()), Vec3{});
  std::vector<Vec3> shaded_verts;  // Gouraud: light at vertices first
  if (model == LightingModel::Gouraud) {
    shaded_verts.resize(size_t(m.total_verts()));
    for (int64_t v = 0; v < m.total_verts(); ++v)
      shaded_verts[size_t(v)] = light_color(light, vnormals[size_t(v)], vertex_colors[size_t(v)]);
  }

  parallel_for(frag.slots(), [&](int64_t lo, int64_t hi) {
    for (int64_t slot = lo; slot < hi; ++slot) {
      int64_t fid = frag.pix_to_face[size_t(slot)];
      if (fid < 0) continue;
      const Face& f = faces[size_t(fid)];
      int64_t vid[3] = {f.a, f.b, f.c};
      Vec3 bary{frag.bary[size_t(slot * 3 + 0)], frag.bary[size_t(slot * 3 + 1)],
                frag.bary[size_t(slot * 3 + 2)]};
      double wts[3] = {bary.x, bary.y, bary.z};

      if (model == LightingModel::Gouraud) {
        Vec3 color{};
        for (int i = 0; i < 3; ++i) color += shaded_verts[size_t(vid[i])] * wts[i];
        out[size_t(slot)] = color;
        continue;
      }

      Vec3 surface{};
      for (int i = 0; i < 3; ++i) surface += vertex_colors[size_t(vid[i])] * wts[i];

      Vec3 n;
      if (model == LightingModel::Flat) {
        Vec3 fn = (verts[size_t(f.b)] - verts[size_t(f.a)])
                      .cross(verts[size_t(f.c)] - verts[size_t(f.a)]);
        if (fn.norm2() == 0) continue;  // zero-area face contributes black
        n = c.rotation.apply(fn.normalized());
      } else {  // Phong: interpolate vertex normals, renormalize
        Vec3 ni{};
        for (int i = 0; i < 3; ++i) ni += vnormals[size_t(vid[i])] * wts[i];
        if (ni.norm2() == 0) continue;
        n = ni.normalized();
      }
      out[size_t(slot)] = light_color(light, n, surface);
    }
  });
  return out;
}

}  // namespace dr
