#include "dr/camera.hpp"

namespace dr {

Camera Camera::orthographic(Mat3 r, Vec3 t, Vec2 scale, double znear, double zfar) {
  Camera c;
  c.rotation = r;
  c.translation = t;
  c.kind = ProjectionKind::Orthographic;
  c.ortho_scale = scale;
  c.znear = znear;
  c.zfar = zfar;
  return c;
}

Camera Camera::perspective(Mat3 r, Vec3 t, double focal, Vec2 pp, double znear, double zfar) {
  Camera c;
  c.rotation = r;
  c.translation = t;
  c.kind = ProjectionKind::Perspective;
  c.focal_length = focal;
  c.principal_point = pp;
  c.znear = znear;
  c.zfar = zfar;
  return c;
}

Camera Camera::look_from_distance(double d, ProjectionKind kind, double focal) {
  // camera on the -z axis, scene pushed to view depth d
  Camera c = kind == ProjectionKind::Perspective
                 ? perspective(Mat3::identity(), {0, 0, d}, focal)
                 : orthographic(Mat3::identity(), {0, 0, d});
  return c;
}

Vec3 world_to_view(const Camera& c, const Vec3& p) {
  return c.rotation.apply(p) + c.translation;
}

NdcPoint view_to_ndc(const Camera& c, const Vec3& p) {
  NdcPoint out;
  out.z_view = p.z;
  if (c.kind == ProjectionKind::Perspective) {
    if (p.z <= 0) {
      out.clipped = true;
      return out;
    }
    out.xy = {c.focal_length * p.x / p.z + c.principal_point.x,
              c.focal_length * p.y / p.z + c.principal_point.y};
  } else {
    out.xy = {c.ortho_scale.x * p.x, c.ortho_scale.y * p.y};
  }
  return out;
}

NdcPoint world_to_ndc(const Camera& c, const Vec3& p) {
  return view_to_ndc(c, world_to_view(c, p));
}

std::vector<Vec3> world_to_view(const Camera& c, const std::vector<Vec3>& pts) {
  std::vector<Vec3> out(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) out[i] = world_to_view(c, pts[i]);
  return out;
}

std::vector<NdcPoint> world_to_ndc(const Camera& c, const std::vector<Vec3>& pts) {
  std::vector<NdcPoint> out(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) out[i] = world_to_ndc(c, pts[i]);
  return out;
}

Vec3 world_to_ndc_backward(const Camera& c, const Vec3& p_world, const Vec2& d_xy, double d_z_view) {
  Vec3 pv = world_to_view(c, p_world);
  Vec3 d_view;
  if (c.kind == ProjectionKind::Perspective) {
    if (pv.z <= 0) return {};
    double f = c.focal_length;
    d_view.x = d_xy.x * f / pv.z;
    d_view.y = d_xy.y * f / pv.z;
    d_view.z = -f * (d_xy.x * pv.x + d_xy.y * pv.y) / (pv.z * pv.z) + d_z_view;
  } else {
    d_view = {d_xy.x * c.ortho_scale.x, d_xy.y * c.ortho_scale.y, d_z_view};
  }
  return c.rotation.apply_transposed(d_view);
}

Vec2 ndc_to_screen(int image_h, int image_w, const Vec2& ndc) {
  // row from y (top row = +1), col from x
  double row = (1.0 - ndc.y) * image_h / 2.0 - 0.5;
  double col = (ndc.x + 1.0) * image_w / 2.0 - 0.5;
  return {col, row};
}

Vec2 screen_to_ndc(int image_h, int image_w, const Vec2& pixel) {
  double x = (2.0 * pixel.x + 1.0) / image_w - 1.0;
  double y = 1.0 - (2.0 * pixel.y + 1.0) / image_h;
  return {x, y};
}

Vec2 pixel_center_ndc(int image_h, int image_w, int i, int j) {
  return {(2.0 * j + 1.0) / image_w - 1.0, 1.0 - (2.0 * i + 1.0) / image_h};
}

}  // namespace dr
