// Heterogeneous batches of meshes and point clouds with list / packed /
// padded views.
//
// Batches are immutable after construction; every view is built eagerly in
// the constructor so sharing across threads needs no synchronization.
// "Mutating" a batch means building a new one.
#pragma once

#include <optional>
#include <vector>

#include "dr/core.hpp"

namespace dr {

// Flat storage for one quantity of a heterogeneous batch.
// offsets has size B+1, starts at 0, ends at data.size().
// item_to_element[i] is the batch element owning packed row i.
template <typename T>
struct PackedView {
  std::vector<T> data;
  std::vector<int64_t> offsets;
  std::vector<int> item_to_element;

  int64_t count(int element) const { return offsets[element + 1] - offsets[element]; }
  const T* begin_of(int element) const { return data.data() + offsets[element]; }
};

template <typename T>
PackedView<T> pack_lists(const std::vector<std::vector<T>>& lists) {
  PackedView<T> out;
  out.offsets.resize(lists.size() + 1, 0);
  int64_t total = 0;
  for (size_t i = 0; i < lists.size(); ++i) {
    total += int64_t(lists[i].size());
    out.offsets[i + 1] = total;
  }
  out.data.reserve(size_t(total));
  out.item_to_element.reserve(size_t(total));
  for (size_t i = 0; i < lists.size(); ++i) {
    out.data.insert(out.data.end(), lists[i].begin(), lists[i].end());
    out.item_to_element.insert(out.item_to_element.end(), lists[i].size(), int(i));
  }
  return out;
}

// padded layout: B x max_count, pad value fills rows beyond each element's count
template <typename T>
std::vector<T> packed_to_padded(const PackedView<T>& packed, const T& pad) {
  int64_t b = int64_t(packed.offsets.size()) - 1;
  int64_t max_count = 0;
  for (int64_t i = 0; i < b; ++i) max_count = std::max(max_count, packed.count(int(i)));
  std::vector<T> out(size_t(b * max_count), pad);
  for (int64_t i = 0; i < b; ++i) {
    int64_t n = packed.count(int(i));
    for (int64_t j = 0; j < n; ++j) out[size_t(i * max_count + j)] = packed.data[size_t(packed.offsets[i] + j)];
  }
  return out;
}

template <typename T>
PackedView<T> padded_to_packed(const std::vector<T>& padded, const std::vector<int64_t>& counts) {
  int64_t b = int64_t(counts.size());
  int64_t max_count = b > 0 ? int64_t(padded.size()) / b : 0;
  PackedView<T> out;
  out.offsets.resize(size_t(b + 1), 0);
  for (int64_t i = 0; i < b; ++i) out.offsets[size_t(i + 1)] = out.offsets[size_t(i)] + counts[size_t(i)];
  out.data.reserve(size_t(out.offsets[size_t(b)]));
  out.item_to_element.reserve(size_t(out.offsets[size_t(b)]));
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t j = 0; j < counts[size_t(i)]; ++j) out.data.push_back(padded[size_t(i * max_count + j)]);
    out.item_to_element.insert(out.item_to_element.end(), size_t(counts[size_t(i)]), int(i));
  }
  return out;
}

template <typename T>
std::vector<std::vector<T>> packed_to_list(const PackedView<T>& packed) {
  int64_t b = int64_t(packed.offsets.size()) - 1;
  std::vector<std::vector<T>> out(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i)
    out[size_t(i)].assign(packed.begin_of(int(i)), packed.begin_of(int(i)) + packed.count(int(i)));
  return out;
}

class MeshBatch {
 public:
  // Throws ShapeError on mismatched list lengths or a zero-vertex mesh,
  // IndexError (with the mesh id) on an out-of-range face index.
  // Zero-face meshes are legal.
  MeshBatch(std::vector<std::vector<Vec3>> verts_list,
            std::vector<std::vector<Face>> faces_list);

  int size() const { return int(verts_list_.size()); }
  const std::vector<std::vector<Vec3>>& verts_list() const { return verts_list_; }
  const std::vector<std::vector<Face>>& faces_list() const { return faces_list_; }
  const std::vector<int64_t>& num_verts_per_mesh() const { return num_verts_; }
  const std::vector<int64_t>& num_faces_per_mesh() const { return num_faces_; }

  // Packed faces carry global indices: each face of mesh i is offset by the
  // cumulative vertex count of meshes 0..i-1.
  const PackedView<Vec3>& verts_packed() const { return verts_packed_; }
  const PackedView<Face>& faces_packed() const { return faces_packed_; }
  int64_t total_verts() const { return verts_packed_.offsets.back(); }
  int64_t total_faces() const { return faces_packed_.offsets.back(); }

  std::vector<Vec3> verts_padded(const Vec3& pad = {}) const {
    return packed_to_padded(verts_packed_, pad);
  }
  // Padded faces keep per-mesh (local) indices; pad slots hold the sentinel.
  std::vector<Face> faces_padded(int64_t sentinel = -1) const;
  int64_t max_verts() const;
  int64_t max_faces() const;

  // New batch with the same topology and replaced packed vertex positions.
  MeshBatch with_verts(const std::vector<Vec3>& new_verts_packed) const;

 private:
  std::vector<std::vector<Vec3>> verts_list_;
  std::vector<std::vector<Face>> faces_list_;
  std::vector<int64_t> num_verts_;
  std::vector<int64_t> num_faces_;
  PackedView<Vec3> verts_packed_;
  PackedView<Face> faces_packed_;  // globally offset indices
};

class PointCloudBatch {
 public:
  // features_list, when present, must be aligned with points_list: one
  // feature row of feature_dim doubles per point.
  explicit PointCloudBatch(std::vector<std::vector<Vec3>> points_list,
                           std::optional<std::vector<std::vector<double>>> features_list = std::nullopt,
                           int feature_dim = 0);

  int size() const { return int(points_list_.size()); }
  const std::vector<std::vector<Vec3>>& points_list() const { return points_list_; }
  const std::vector<int64_t>& num_points_per_cloud() const { return num_points_; }
  const PackedView<Vec3>& points_packed() const { return points_packed_; }
  int64_t total_points() const { return points_packed_.offsets.back(); }

  bool has_features() const { return feature_dim_ > 0; }
  int feature_dim() const { return feature_dim_; }
  // feature_dim doubles per packed point
  const std::vector<double>& features_packed() const { return features_packed_; }

  std::vector<Vec3> points_padded(const Vec3& pad = {}) const {
    return packed_to_padded(points_packed_, pad);
  }

  PointCloudBatch with_points(const std::vector<Vec3>& new_points_packed) const;

 private:
  std::vector<std::vector<Vec3>> points_list_;
  std::vector<int64_t> num_points_;
  PackedView<Vec3> points_packed_;
  std::vector<double> features_packed_;
  int feature_dim_ = 0;
};

}  // namespace dr
