#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dr/camera.hpp"
#include "helpers.hpp"

using namespace dr;
using namespace testutil;

TEST_CASE("pixel centers map to the documented NDC grid") {
  // 4x4 image: pixel (0,0) center at x = -0.75, y = 0.75
  Vec2 c = pixel_center_ndc(4, 4, 0, 0);
  CHECK(c.x == doctest::Approx(-0.75));
  CHECK(c.y == doctest::Approx(0.75));
  c = pixel_center_ndc(4, 4, 3, 3);
  CHECK(c.x == doctest::Approx(0.75));
  CHECK(c.y == doctest::Approx(-0.75));
  // row increases downward, y decreases
  CHECK(pixel_center_ndc(8, 8, 5, 2).y < pixel_center_ndc(8, 8, 4, 2).y);
}

TEST_CASE("ndc <-> screen round trip") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    Vec2 ndc{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Vec2 px = ndc_to_screen(32, 64, ndc);
    Vec2 back = screen_to_ndc(32, 64, px);
    CHECK(back.x == doctest::Approx(ndc.x).epsilon(1e-12));
    CHECK(back.y == doctest::Approx(ndc.y).epsilon(1e-12));
  }
  // pixel (i, j) center round-trips through pixel_center_ndc
  Vec2 c = pixel_center_ndc(32, 64, 7, 9);
  Vec2 px = ndc_to_screen(32, 64, c);
  CHECK(px.x == doctest::Approx(9.0));
  CHECK(px.y == doctest::Approx(7.0));
}

TEST_CASE("orthographic projection drops depth, keeps xy") {
  Camera c = Camera::look_from_distance(5.0, ProjectionKind::Orthographic);
  NdcPoint p = world_to_ndc(c, {0.25, -0.5, 1.0});
  CHECK(p.xy.x == doctest::Approx(0.25));
  CHECK(p.xy.y == doctest::Approx(-0.5));
  CHECK(p.z_view == doctest::Approx(6.0));  // camera at distance 5 looking down +z
  CHECK_FALSE(p.clipped);
}

TEST_CASE("perspective projection divides by view depth") {
  Camera c = Camera::look_from_distance(2.0, ProjectionKind::Perspective, 1.5);
  NdcPoint p = world_to_ndc(c, {0.4, 0.2, 0.0});
  CHECK(p.z_view == doctest::Approx(2.0));
  CHECK(p.xy.x == doctest::Approx(1.5 * 0.4 / 2.0));
  CHECK(p.xy.y == doctest::Approx(1.5 * 0.2 / 2.0));
  // point at half depth projects twice as far from the axis
  NdcPoint near = world_to_ndc(c, {0.4, 0.2, -1.0});
  CHECK(near.xy.x == doctest::Approx(2.0 * p.xy.x));
}

TEST_CASE("points behind the camera are clipped") {
  Camera c = Camera::look_from_distance(1.0, ProjectionKind::Perspective);
  CHECK(world_to_ndc(c, {0, 0, -2.0}).clipped);  // view z = -1
  CHECK(world_to_ndc(c, {0, 0, -1.0}).clipped);  // view z = 0
  CHECK_FALSE(world_to_ndc(c, {0, 0, 0}).clipped);
}

TEST_CASE("rotation happens before translation") {
  // 90 degrees about +y: world +x maps to view -z (right-handed rotation)
  Mat3 r = axis_angle({0, 1, 0}, 3.14159265358979323846 / 2);
  Camera c = Camera::orthographic(r, {0, 0, 3});
  Vec3 v = world_to_view(c, {1, 0, 0});
  CHECK(v.x == doctest::Approx(0.0));
  CHECK(v.y == doctest::Approx(0.0));
  CHECK(v.z == doctest::Approx(3.0 - 1.0).epsilon(1e-9));
}

TEST_CASE("principal point shifts NDC coordinates") {
  Camera c = Camera::perspective(Mat3::identity(), {0, 0, 2}, 1.0, {0.1, -0.2});
  NdcPoint p = world_to_ndc(c, {0, 0, 0});
  CHECK(p.xy.x == doctest::Approx(0.1));
  CHECK(p.xy.y == doctest::Approx(-0.2));
}

TEST_CASE("world_to_ndc_backward matches finite differences") {
  Rng rng(7);
  Mat3 r = axis_angle({0.3, 0.8, 0.5}, 0.7);
  for (ProjectionKind kind : {ProjectionKind::Perspective, ProjectionKind::Orthographic}) {
    Camera c = kind == ProjectionKind::Perspective
                   ? Camera::perspective(r, {0.1, -0.2, 3.0}, 1.7, {0.05, 0.02})
                   : Camera::orthographic(r, {0.1, -0.2, 3.0}, {1.3, 0.9});
    for (int t = 0; t < 10; ++t) {
      Vec3 p = rng.normal_vec3() * 0.5;
      Vec2 d_xy{rng.normal(), rng.normal()};
      double d_z = rng.normal();
      Vec3 g = world_to_ndc_backward(c, p, d_xy, d_z);
      double eps = 1e-6;
      for (int axis = 0; axis < 3; ++axis) {
        Vec3 pp = p, pm = p;
        double* cp = axis == 0 ? &pp.x : (axis == 1 ? &pp.y : &pp.z);
        double* cm = axis == 0 ? &pm.x : (axis == 1 ? &pm.y : &pm.z);
        *cp += eps;
        *cm -= eps;
        NdcPoint up = world_to_ndc(c, pp), dn = world_to_ndc(c, pm);
        double fd = (d_xy.x * (up.xy.x - dn.xy.x) + d_xy.y * (up.xy.y - dn.xy.y) +
                     d_z * (up.z_view - dn.z_view)) /
                    (2 * eps);
        double an = axis == 0 ? g.x : (axis == 1 ? g.y : g.z);
        CHECK(rel_diff(fd, an, 1e-8) <= 1e-5);
      }
    }
  }
}

TEST_CASE("clipped points get zero gradient") {
  Camera c = Camera::look_from_distance(1.0, ProjectionKind::Perspective);
  Vec3 g = world_to_ndc_backward(c, {0, 0, -5}, {1, 1}, 1);
  CHECK(g.x == 0);
  CHECK(g.y == 0);
  CHECK(g.z == 0);
}
