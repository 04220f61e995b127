#include "dr/templates.hpp"

#include <cmath>
#include <map>

namespace dr {

namespace {

// icosahedron with outward winding
void icosahedron(std::vector<Vec3>& verts, std::vector<Face>& faces) {
  double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  verts = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
           {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
           {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (Vec3& v : verts) v = v.normalized();
  faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
           {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
           {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
           {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
}

}  // namespace

MeshBatch ico_sphere(int level) {
  if (level < 0 || level > 6)
    throw RangeError("ico_sphere: level " + std::to_string(level) + " outside [0, 6]");
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  icosahedron(verts, faces);
  // level 0 is the raw icosahedron; past that each level adds one midpoint
  // subdivision on top of a doubled first step, landing on the reference
  // sizes 642/1280 at level 2 and 2562/5120 at level 3
  int rounds = level == 0 ? 0 : level + 1;
  for (int l = 0; l < rounds; ++l) {
    std::map<std::pair<int64_t, int64_t>, int64_t> midpoint;
    auto mid = [&](int64_t a, int64_t b) {
      auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 m = ((verts[size_t(a)] + verts[size_t(b)]) * 0.5).normalized();
      verts.push_back(m);
      int64_t id = int64_t(verts.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      int64_t ab = mid(f.a, f.b), bc = mid(f.b, f.c), ca = mid(f.c, f.a);
      next.push_back({f.a, ab, ca});
      next.push_back({f.b, bc, ab});
      next.push_back({f.c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  return MeshBatch({std::move(verts)}, {std::move(faces)});
}

MeshBatch cube(double half, int n) {
  std::vector<Vec3> verts;
  std::vector<Face> faces;
  // one grid per cube face; corner/edge vertices are duplicated across
  // faces, which is fine for rendering and sampling
  struct Axis {
    Vec3 origin, du, dv;
  };
  double s = 2.0 * half / n;
  Axis sides[6] = {
      {{-half, -half, half}, {s, 0, 0}, {0, s, 0}},    // +z
      {{half, -half, -half}, {-s, 0, 0}, {0, s, 0}},   // -z
      {{half, -half, half}, {0, 0, -s}, {0, s, 0}},    // +x
      {{-half, -half, -half}, {0, 0, s}, {0, s, 0}},   // -x
      {{-half, half, half}, {s, 0, 0}, {0, 0, -s}},    // +y
      {{-half, -half, -half}, {s, 0, 0}, {0, 0, s}},   // -y
  };
  for (const Axis& ax : sides) {
    int64_t base = int64_t(verts.size());
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) verts.push_back(ax.origin + ax.du * j + ax.dv * i);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        int64_t v00 = base + int64_t(i) * (n + 1) + j;
        int64_t v01 = v00 + 1;
        int64_t v10 = v00 + (n + 1);
        int64_t v11 = v10 + 1;
        faces.push_back({v00, v01, v11});
        faces.push_back({v00, v11, v10});
      }
    }
  }
  return MeshBatch({std::move(verts)}, {std::move(faces)});
}

MeshBatch synthetic_batch(double mean_faces, double sigma, int batch_size, uint64_t seed) {
  // discrete template ladder standing in for a mesh dataset
  struct Entry {
    int64_t faces;
    int kind;  // 0 = sphere(level), 1 = cube(n)
    int param;
  };
  std::vector<Entry> ladder;
  ladder.push_back({20, 0, 0});
  for (int l = 1; l <= 4; ++l) ladder.push_back({20 * (int64_t(1) << (2 * (l + 1))), 0, l});
  for (int n : {1, 2, 3, 4, 6, 8, 12, 16, 24, 32}) ladder.push_back({12LL * n * n, 1, n});
  std::sort(ladder.begin(), ladder.end(),
            [](const Entry& a, const Entry& b) { return a.faces < b.faces; });

  auto closest = [&](double target) {
    const Entry* best = &ladder[0];
    for (const Entry& e : ladder)
      if (std::abs(double(e.faces) - target) < std::abs(double(best->faces) - target)) best = &e;
    return *best;
  };
  auto build = [](const Entry& e) {
    return e.kind == 0 ? ico_sphere(e.param) : cube(1.0, e.param);
  };

  Rng rng(seed);
  std::vector<std::vector<Vec3>> verts;
  std::vector<std::vector<Face>> faces;
  // uniform with the requested mean and sigma has half-width sqrt(3)*sigma
  double hw = std::sqrt(3.0) * sigma;
  Entry homogeneous = closest(mean_faces);
  for (int b = 0; b < batch_size; ++b) {
    Entry e = sigma == 0 ? homogeneous : closest(rng.uniform(mean_faces - hw, mean_faces + hw));
    MeshBatch m = build(e);
    verts.push_back(m.verts_list()[0]);
    faces.push_back(m.faces_list()[0]);
  }
  return MeshBatch(std::move(verts), std::move(faces));
}

std::vector<int64_t> synthetic_batch_face_counts(const MeshBatch& m) {
  return m.num_faces_per_mesh();
}

}  // namespace dr
