// Procedural mesh generators used by demos, tests and benchmarks.
#pragma once

#include "dr/batching.hpp"

namespace dr {

// Unit sphere from midpoint-subdividing an icosahedron, shared midpoints
// deduplicated, vertices reprojected to unit norm. level in [0, 6]:
// level 0 is the icosahedron (12 verts / 20 faces); level 2 gives
// 642 / 1280 and level 3 gives 2562 / 5120.
MeshBatch ico_sphere(int level);

// Axis-aligned cube of half-extent `half`, each of the 6 faces split into
// n x n quads (two triangles each): 12 n^2 faces.
MeshBatch cube(double half = 1.0, int n = 1);

// Batch of template meshes whose face counts approximate a uniform draw
// with the given mean and sigma, per the sampling protocol used by the
// benchmarks. sigma = 0 repeats one mesh batch_size times.
MeshBatch synthetic_batch(double mean_faces, double sigma, int batch_size, uint64_t seed);

// per-element face counts actually delivered by the template ladder
std::vector<int64_t> synthetic_batch_face_counts(const MeshBatch& m);

}  // namespace dr
