#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dr/batching.hpp"
#include "helpers.hpp"

using namespace dr;

TEST_CASE("pack_lists offsets and ownership") {
  std::vector<std::vector<double>> lists{{1, 2, 3}, {}, {4, 5}};
  PackedView<double> p = pack_lists(lists);
  CHECK(p.data == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(p.offsets == std::vector<int64_t>{0, 3, 3, 5});
  CHECK(p.item_to_element == std::vector<int>{0, 0, 0, 2, 2});
  CHECK(p.count(1) == 0);
}

TEST_CASE("packed <-> padded <-> list round trips") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    int b = 1 + int(rng.uniform_int(5));
    std::vector<std::vector<double>> lists(static_cast<size_t>(b));
    for (auto& l : lists) {
      l.resize(size_t(rng.uniform_int(7)));
      for (auto& v : l) v = rng.normal();
    }
    PackedView<double> packed = pack_lists(lists);
    CHECK(packed_to_list(packed) == lists);

    std::vector<double> padded = packed_to_padded(packed, -7.0);
    int64_t maxn = 0;
    for (auto& l : lists) maxn = std::max<int64_t>(maxn, int64_t(l.size()));
    REQUIRE(int64_t(padded.size()) == int64_t(b) * maxn);
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < maxn; ++j) {
        double want = j < int64_t(lists[size_t(i)].size()) ? lists[size_t(i)][size_t(j)] : -7.0;
        CHECK(padded[size_t(i * maxn + j)] == want);
      }

    std::vector<int64_t> counts;
    for (auto& l : lists) counts.push_back(int64_t(l.size()));
    PackedView<double> back = padded_to_packed(padded, counts);
    CHECK(back.data == packed.data);
    CHECK(back.offsets == packed.offsets);
    CHECK(back.item_to_element == packed.item_to_element);
  }
}

static MeshBatch two_triangles() {
  std::vector<std::vector<Vec3>> v{
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}},
      {{0, 0, 1}, {2, 0, 1}, {0, 2, 1}, {2, 2, 1}},
  };
  std::vector<std::vector<Face>> f{{{0, 1, 2}}, {{0, 1, 2}, {1, 3, 2}}};
  return MeshBatch(v, f);
}

TEST_CASE("MeshBatch packed faces use global vertex offsets") {
  MeshBatch m = two_triangles();
  CHECK(m.size() == 2);
  CHECK(m.total_verts() == 7);
  CHECK(m.total_faces() == 3);
  const auto& fp = m.faces_packed();
  CHECK(fp.data[0].a == 0);
  CHECK(fp.data[1].a == 3);  // second mesh offset by 3 verts
  CHECK(fp.data[1].c == 5);
  CHECK(fp.data[2].b == 6);
  CHECK(fp.item_to_element == std::vector<int>{0, 1, 1});
}

TEST_CASE("MeshBatch padded views pad with defaults") {
  MeshBatch m = two_triangles();
  std::vector<Vec3> vp = m.verts_padded();
  REQUIRE(int64_t(vp.size()) == 2 * m.max_verts());
  CHECK(vp[3].x == 0);  // mesh 0 row 3 is padding
  CHECK(vp[3].y == 0);
  CHECK(vp[3].z == 0);
  std::vector<Face> fp = m.faces_padded();
  REQUIRE(int64_t(fp.size()) == 2 * m.max_faces());
  CHECK(fp[0].a == 0);   // local indices, not offset
  CHECK(fp[1].a == -1);  // sentinel
  CHECK(fp[2].a == 0);
  CHECK(fp[3].b == 3);
}

TEST_CASE("MeshBatch validation errors") {
  std::vector<std::vector<Vec3>> v{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}};
  CHECK_THROWS_AS(MeshBatch(v, {{{0, 1, 2}}, {{0, 1, 2}}}), ShapeError);  // length mismatch
  CHECK_THROWS_AS(MeshBatch({{}}, {{}}), ShapeError);                     // zero-vertex mesh
  CHECK_THROWS_AS(MeshBatch(v, {{{0, 1, 3}}}), IndexError);               // face index out of range
  CHECK_THROWS_AS(MeshBatch(v, {{{0, -1, 2}}}), IndexError);
  CHECK_NOTHROW(MeshBatch(v, {{}}));  // zero faces is legal
}

TEST_CASE("with_verts replaces positions, keeps topology") {
  MeshBatch m = two_triangles();
  std::vector<Vec3> nv = m.verts_packed().data;
  for (Vec3& p : nv) p += Vec3{1, 2, 3};
  MeshBatch m2 = m.with_verts(nv);
  CHECK(m2.faces_packed().data[1].a == m.faces_packed().data[1].a);
  CHECK(m2.verts_list()[1][0].z == doctest::Approx(4.0));
  CHECK(m.verts_list()[1][0].z == doctest::Approx(1.0));  // original untouched
}

TEST_CASE("PointCloudBatch features stay aligned") {
  std::vector<std::vector<Vec3>> pts{{{0, 0, 0}, {1, 1, 1}}, {{2, 2, 2}}};
  std::vector<std::vector<double>> feats{{1, 2, 3, 4}, {5, 6}};
  PointCloudBatch pc(pts, feats, 2);
  CHECK(pc.total_points() == 3);
  CHECK(pc.has_features());
  CHECK(pc.feature_dim() == 2);
  CHECK(pc.features_packed() == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(pc.points_packed().item_to_element == std::vector<int>{0, 0, 1});
  std::vector<std::vector<double>> bad{{1, 2}, {5, 6}};
  CHECK_THROWS_AS(PointCloudBatch(pts, bad, 2), ShapeError);
}
