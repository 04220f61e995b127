// Shaders and blending over MeshFragments: attribute interpolation,
// silhouette / softmax / hard blending, and flat / Gouraud / Phong
// lighting with per-vertex colors.
#pragma once

#include <vector>

#include "dr/batching.hpp"
#include "dr/core.hpp"
#include "dr/mesh_raster.hpp"

namespace dr {

struct BlendParams {
  double sigma = 1e-4;  // opacity falloff, squared-NDC units
  double gamma = 1e-4;  // softmax temperature
  Vec3 background_color{0, 0, 0};
};

struct DirectionalLight {
  // unit vector from the surface toward the light; default puts the light on
  // the camera side (the camera looks down +z) so visible faces are lit
  Vec3 direction{0, 0, -1};
  Vec3 ambient{0.2, 0.2, 0.2};
  Vec3 diffuse{0.8, 0.8, 0.8};
  Vec3 specular{0, 0, 0};
  double shininess = 32;
};

// out[slot*D + d] = sum_i bary_i * attrs[face_vertex_i * D + d]; empty
// slots are zero. attrs is packed-vertex aligned, D doubles per vertex.
std::vector<double> interpolate_face_attributes(const MeshBatch& m, const MeshFragments& frag,
                                                const std::vector<double>& attrs, int dim);
struct InterpolateGrads {
  std::vector<double> d_attrs;  // packed V x D
  std::vector<double> d_bary;   // slots x 3
};
InterpolateGrads interpolate_face_attributes_backward(const MeshBatch& m, const MeshFragments& frag,
                                                      const std::vector<double>& attrs, int dim,
                                                      const std::vector<double>& d_out);

// alpha = 1 - prod_k (1 - sigmoid(-dists_k / sigma)), empty slots skipped
std::vector<double> silhouette_blend(const MeshFragments& frag, double sigma);
// cotangent on alpha pulled back to the dists buffer
std::vector<double> silhouette_blend_backward(const MeshFragments& frag, double sigma,
                                              const std::vector<double>& d_alpha);

// Softmax blending: depth-weighted convex combination of the K slot colors.
// colors is slots x 3; pixels with no occupied slot get the background.
std::vector<Vec3> softmax_blend(const MeshFragments& frag, const std::vector<Vec3>& colors,
                                const BlendParams& p, double znear, double zfar);
struct SoftmaxBlendGrads {
  std::vector<Vec3> d_colors;
  std::vector<double> d_dists;
  std::vector<double> d_zbuf;
};
SoftmaxBlendGrads softmax_blend_backward(const MeshFragments& frag, const std::vector<Vec3>& colors,
                                         const BlendParams& p, double znear, double zfar,
                                         const std::vector<Vec3>& d_image);

// slot 0's color where occupied with dists < 0, else background
std::vector<Vec3> hard_blend(const MeshFragments& frag, const std::vector<Vec3>& colors,
                             const Vec3& background);

// Per-vertex normals as area-weighted averages of incident face normals.
std::vector<Vec3> vertex_normals(const MeshBatch& m);

enum class LightingModel { Flat, Gouraud, Phong };

// Computes slot colors (slots x 3) for blending. Lighting is
// ambient + diffuse * max(0, n.l) + specular * max(0, r.v)^shininess,
// componentwise with the interpolated surface color; the viewer sits at -z
// in view space. Zero-area faces contribute black.
std::vector<Vec3> shade(LightingModel model, const MeshBatch& m, const Camera& c,
                        const MeshFragments& frag, const DirectionalLight& light,
                        const std::vector<Vec3>& vertex_colors);

}  // namespace dr
