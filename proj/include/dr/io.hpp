// OBJ and PNG I/O for the CLI: the OBJ subset `v x y z [r g b]` /
// `f i j k ...` (1-indexed, negative from the end, polygons
// fan-triangulated), and 8-bit RGB(A) PNG with values in [0,1].
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dr/batching.hpp"
#include "dr/core.hpp"

namespace dr {

struct ObjMesh {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  std::optional<std::vector<Vec3>> vertex_colors;
};

ObjMesh load_obj(const std::string& path);
void save_obj(const std::string& path, const std::vector<Vec3>& verts,
              const std::vector<Face>& faces,
              const std::optional<std::vector<Vec3>>& colors = std::nullopt);

MeshBatch obj_to_batch(const ObjMesh& mesh);

// H x W x C image, row-major, C in {1, 3, 4}, values expected in [0,1]
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<double> data;
  double& at(int i, int j, int ch) { return data[size_t((int64_t(i) * w + j) * c + ch)]; }
  double at(int i, int j, int ch) const { return data[size_t((int64_t(i) * w + j) * c + ch)]; }
};

// value v -> round(v * 255), clamped; C=1 is expanded to grayscale RGB
void save_png(const Image& img, const std::string& path);
Image load_png(const std::string& path);

}  // namespace dr
