// World -> view -> NDC -> screen transforms.
//
// Conventions (asserted by the camera tests):
// - view space: camera at the origin looking down +z, +y up.
// - NDC: [-1,1]^2, +y up; pixel (i,j) center maps to
//   y = 1 - (2i+1)/H, x = (2j+1)/W - 1.
// - perspective projection divides by view z; points with z <= 0 are
//   marked clipped.
#pragma once

#include <vector>

#include "dr/core.hpp"

namespace dr {

enum class ProjectionKind { Orthographic, Perspective };

struct Camera {
  Mat3 rotation;          // world -> view
  Vec3 translation;       // world -> view
  ProjectionKind kind = ProjectionKind::Perspective;
  double focal_length = 1.0;   // perspective
  Vec2 principal_point{};      // perspective, NDC units
  Vec2 ortho_scale{1.0, 1.0};  // orthographic, per axis
  double znear = 0.1;
  double zfar = 100.0;

  static Camera orthographic(Mat3 r, Vec3 t, Vec2 scale = {1, 1},
                             double znear = 0.1, double zfar = 100.0);
  static Camera perspective(Mat3 r, Vec3 t, double focal = 1.0, Vec2 pp = {},
                            double znear = 0.1, double zfar = 100.0);
  // camera at distance d on -z axis looking at the origin (identity rotation)
  static Camera look_from_distance(double d, ProjectionKind kind, double focal = 1.0);
};

// One projected point: xy in NDC plus the raw view-space depth, which the
// rasterizers use unprojected for z tests.
struct NdcPoint {
  Vec2 xy;
  double z_view = 0;
  bool clipped = false;
};

Vec3 world_to_view(const Camera& c, const Vec3& p);
NdcPoint view_to_ndc(const Camera& c, const Vec3& p_view);
NdcPoint world_to_ndc(const Camera& c, const Vec3& p_world);

std::vector<Vec3> world_to_view(const Camera& c, const std::vector<Vec3>& pts);
std::vector<NdcPoint> world_to_ndc(const Camera& c, const std::vector<Vec3>& pts);

// vjp of world_to_ndc for one point: cotangents on (ndc x, ndc y, view z)
// pulled back to the world position. Clipped points get zero gradient.
Vec3 world_to_ndc_backward(const Camera& c, const Vec3& p_world, const Vec2& d_xy, double d_z_view);

// screen mapping; pixel coordinates are continuous, (row, col) with (0,0)
// at the top-left pixel center
Vec2 ndc_to_screen(int image_h, int image_w, const Vec2& ndc);
Vec2 screen_to_ndc(int image_h, int image_w, const Vec2& pixel);
// NDC position of pixel center (i, j)
Vec2 pixel_center_ndc(int image_h, int image_w, int i, int j);

}  // namespace dr
