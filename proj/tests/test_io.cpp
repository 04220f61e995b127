#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "dr/io.hpp"
#include "helpers.hpp"

using namespace dr;
using namespace testutil;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("io_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

}  // namespace

TEST_CASE("load_obj parses the basic subset") {
  TempFile f("basic.obj");
  write_text(f.path,
             "# comment\n"
             "v 0 0 0\n"
             "v 1 0 0\n"
             "v 0 1 0\n"
             "vt 0 0\n"
             "vn 0 0 1\n"
             "f 1 2 3\n");
  ObjMesh m = load_obj(f.path);
  REQUIRE(m.verts.size() == 3);
  REQUIRE(m.faces.size() == 1);
  CHECK(m.faces[0] == Face{0, 1, 2});
  CHECK_FALSE(m.vertex_colors.has_value());
}

TEST_CASE("load_obj fan-triangulates polygons") {
  TempFile f("quad.obj");
  write_text(f.path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  ObjMesh m = load_obj(f.path);
  REQUIRE(m.faces.size() == 2);
  CHECK(m.faces[0] == Face{0, 1, 2});
  CHECK(m.faces[1] == Face{0, 2, 3});
}

TEST_CASE("load_obj resolves negative and slash-qualified indices") {
  TempFile f("neg.obj");
  write_text(f.path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2/5 -1/5/7\n");
  ObjMesh m = load_obj(f.path);
  REQUIRE(m.faces.size() == 1);
  CHECK(m.faces[0] == Face{0, 1, 2});
}

TEST_CASE("load_obj reads optional vertex colors") {
  TempFile f("color.obj");
  write_text(f.path, "v 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 0 1 0\nf 1 2 3\n");
  ObjMesh m = load_obj(f.path);
  REQUIRE(m.vertex_colors.has_value());
  REQUIRE(m.vertex_colors->size() == 3);
  CHECK((*m.vertex_colors)[0] == Vec3{1, 0, 0});
  CHECK((*m.vertex_colors)[2] == Vec3{1, 1, 1});  // default for uncolored verts
}

TEST_CASE("load_obj reports parse errors with line numbers") {
  TempFile f("bad.obj");
  write_text(f.path, "v 0 0 0\nv 1 0\n");
  try {
    load_obj(f.path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  write_text(f.path, "v 0 0 0\nf 1 2 3\n");
  CHECK_THROWS_AS(load_obj(f.path), ParseError);  // index out of range
  write_text(f.path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n");
  CHECK_THROWS_AS(load_obj(f.path), ParseError);  // too few indices
  write_text(f.path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
  CHECK_THROWS_AS(load_obj(f.path), ParseError);  // OBJ indices are 1-based
  CHECK_THROWS_AS(load_obj("does_not_exist.obj"), IoError);
}

TEST_CASE("save_obj / load_obj round trip preserves doubles exactly") {
  Rng rng(113);
  std::vector<Vec3> verts(20);
  for (auto& v : verts) v = rng.normal_vec3();
  std::vector<Face> faces;
  for (int i = 0; i < 12; ++i)
    faces.push_back({rng.uniform_int(20), rng.uniform_int(20), rng.uniform_int(20)});
  TempFile f("roundtrip.obj");
  save_obj(f.path, verts, faces);
  ObjMesh m = load_obj(f.path);
  REQUIRE(m.verts.size() == verts.size());
  REQUIRE(m.faces.size() == faces.size());
  for (size_t i = 0; i < verts.size(); ++i) CHECK(m.verts[i] == verts[i]);
  for (size_t i = 0; i < faces.size(); ++i) CHECK(m.faces[i] == faces[i]);
  // colors round trip too
  std::vector<Vec3> colors(20, Vec3{0.25, 0.5, 0.75});
  save_obj(f.path, verts, faces, colors);
  ObjMesh mc = load_obj(f.path);
  REQUIRE(mc.vertex_colors.has_value());
  CHECK((*mc.vertex_colors)[7] == Vec3{0.25, 0.5, 0.75});
}

TEST_CASE("save_png / load_png round trip is exact after quantization") {
  Rng rng(127);
  for (int channels : {3, 4}) {
    Image img;
    img.h = 13;
    img.w = 17;
    img.c = channels;
    img.data.resize(size_t(img.h * img.w * channels));
    for (auto& v : img.data) v = rng.uniform();
    TempFile f("round.png");
    save_png(img, f.path);
    Image back = load_png(f.path);
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    REQUIRE(back.c == channels);
    for (size_t i = 0; i < img.data.size(); ++i) {
      double quantized = std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0) / 255.0;
      CHECK(std::abs(back.data[i] - quantized) <= 1e-12);
    }
  }
}

TEST_CASE("png edge values map to 0 and 255") {
  Image img;
  img.h = img.w = 2;
  img.c = 3;
  img.data = {0, 0, 0, 1, 1, 1, -0.5, 2.0, 0.5, 1, 0, 1};  // includes out-of-range values
  TempFile f("edges.png");
  save_png(img, f.path);
  Image back = load_png(f.path);
  CHECK(back.data[0] == 0.0);
  CHECK(back.data[3] == 1.0);
  CHECK(back.data[6] == 0.0);  // clamped below
  CHECK(back.data[7] == 1.0);  // clamped above
}

TEST_CASE("grayscale images are expanded to RGB") {
  Image img;
  img.h = img.w = 4;
  img.c = 1;
  img.data.assign(16, 0.5);
  TempFile f("gray.png");
  save_png(img, f.path);
  Image back = load_png(f.path);
  CHECK(back.c == 3);
  CHECK(back.data[0] == back.data[1]);
  CHECK(back.data[1] == back.data[2]);
}

TEST_CASE("load_png rejects malformed files") {
  TempFile f("notpng.png");
  write_text(f.path, "definitely not a png");
  CHECK_THROWS_AS(load_png(f.path), IoError);
  CHECK_THROWS_AS(load_png("missing_file.png"), IoError);
}

TEST_CASE("obj_to_batch builds a single-mesh batch") {
  ObjMesh m;
  m.verts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  MeshBatch b = obj_to_batch(m);
  CHECK(b.size() == 1);
  CHECK(b.total_verts() == 3);
  CHECK(b.total_faces() == 1);
}
