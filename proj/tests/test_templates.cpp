#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dr/geometry.hpp"
#include "dr/templates.hpp"
#include "helpers.hpp"

using namespace dr;

static int64_t euler_edges(const MeshBatch& m) {
  return int64_t(mesh_edges_packed(m).size());
}

TEST_CASE("ico_sphere reference sizes") {
  MeshBatch l0 = ico_sphere(0);
  CHECK(l0.total_verts() == 12);
  CHECK(l0.total_faces() == 20);
  MeshBatch l2 = ico_sphere(2);
  CHECK(l2.total_verts() == 642);
  CHECK(l2.total_faces() == 1280);
  MeshBatch l3 = ico_sphere(3);
  CHECK(l3.total_verts() == 2562);
  CHECK(l3.total_faces() == 5120);
}

TEST_CASE("ico_sphere level bounds") {
  CHECK_THROWS_AS(ico_sphere(-1), RangeError);
  CHECK_THROWS_AS(ico_sphere(7), RangeError);
}

TEST_CASE("ico_sphere vertices lie on the unit sphere, mesh is closed") {
  for (int level : {0, 1, 2}) {
    MeshBatch m = ico_sphere(level);
    for (const Vec3& v : m.verts_packed().data)
      CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-6));
    // Euler characteristic of a closed genus-0 surface
    CHECK(m.total_verts() - euler_edges(m) + m.total_faces() == 2);
    // watertight: every edge is shared by exactly two faces
    std::map<std::pair<int64_t, int64_t>, int> uses;
    for (const Face& f : m.faces_packed().data) {
      auto add = [&](int64_t a, int64_t b) { uses[{std::min(a, b), std::max(a, b)}]++; };
      add(f.a, f.b);
      add(f.b, f.c);
      add(f.c, f.a);
    }
    for (const auto& [e, n] : uses) CHECK(n == 2);
  }
}

TEST_CASE("ico_sphere faces wind outward") {
  MeshBatch m = ico_sphere(1);
  const auto& v = m.verts_packed().data;
  for (const Face& f : m.faces_packed().data) {
    Vec3 n = (v[size_t(f.b)] - v[size_t(f.a)]).cross(v[size_t(f.c)] - v[size_t(f.a)]);
    Vec3 centroid = (v[size_t(f.a)] + v[size_t(f.b)] + v[size_t(f.c)]) * (1.0 / 3.0);
    CHECK(n.dot(centroid) > 0);
  }
}

TEST_CASE("cube sizes and geometry") {
  for (int n : {1, 2, 4}) {
    MeshBatch m = cube(0.5, n);
    CHECK(m.total_faces() == 12 * n * n);
    CHECK(m.total_verts() == 6 * (n + 1) * (n + 1));
    for (const Vec3& v : m.verts_packed().data) {
      double mx = std::max({std::abs(v.x), std::abs(v.y), std::abs(v.z)});
      CHECK(mx == doctest::Approx(0.5).epsilon(1e-12));
    }
  }
  // faces wind outward
  MeshBatch m = cube(1.0, 2);
  const auto& v = m.verts_packed().data;
  for (const Face& f : m.faces_packed().data) {
    Vec3 n = (v[size_t(f.b)] - v[size_t(f.a)]).cross(v[size_t(f.c)] - v[size_t(f.a)]);
    Vec3 centroid = (v[size_t(f.a)] + v[size_t(f.b)] + v[size_t(f.c)]) * (1.0 / 3.0);
    CHECK(n.dot(centroid) > 0);
  }
}

TEST_CASE("all template meshes have strictly positive face areas") {
  for (const MeshBatch& m : {ico_sphere(2), cube(1.0, 3)}) {
    const auto& v = m.verts_packed().data;
    for (const Face& f : m.faces_packed().data) {
      double area =
          0.5 * (v[size_t(f.b)] - v[size_t(f.a)]).cross(v[size_t(f.c)] - v[size_t(f.a)]).norm();
      CHECK(area > 0);
    }
  }
}

TEST_CASE("synthetic_batch with sigma 0 repeats one mesh") {
  MeshBatch m = synthetic_batch(1000, 0, 4, 99);
  auto counts = synthetic_batch_face_counts(m);
  REQUIRE(counts.size() == 4);
  for (int64_t c : counts) CHECK(c == counts[0]);
  for (int b = 1; b < 4; ++b) CHECK(m.verts_list()[size_t(b)] == m.verts_list()[0]);
}

TEST_CASE("synthetic_batch face counts track the requested spread") {
  double mean = 2000, sigma = 800;
  MeshBatch m = synthetic_batch(mean, sigma, 16, 7);
  double hw = std::sqrt(3.0) * sigma;
  // the ladder snaps to the nearest template, so allow the coarsest gap
  for (int64_t c : synthetic_batch_face_counts(m)) {
    CHECK(double(c) >= mean - hw - 2500);
    CHECK(double(c) <= mean + hw + 2500);
  }
}

TEST_CASE("synthetic_batch is reproducible per seed") {
  MeshBatch a = synthetic_batch(5000, 2000, 6, 123);
  MeshBatch b = synthetic_batch(5000, 2000, 6, 123);
  CHECK(synthetic_batch_face_counts(a) == synthetic_batch_face_counts(b));
  for (int e = 0; e < 6; ++e) CHECK(a.verts_list()[size_t(e)] == b.verts_list()[size_t(e)]);
  MeshBatch c = synthetic_batch(5000, 2000, 6, 124);
  CHECK(synthetic_batch_face_counts(a) != synthetic_batch_face_counts(c));
}
