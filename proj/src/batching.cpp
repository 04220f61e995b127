#include "dr/batching.hpp"

#include <string>

namespace dr {

MeshBatch::MeshBatch(std::vector<std::vector<Vec3>> verts_list,
                     std::vector<std::vector<Face>> faces_list)
    : verts_list_(std::move(verts_list)), faces_list_(std::move(faces_list)) {
  if (verts_list_.size() != faces_list_.size())
    throw ShapeError("verts_list and faces_list lengths differ: " +
                     std::to_string(verts_list_.size()) + " vs " +
                     std::to_string(faces_list_.size()));
  if (verts_list_.empty()) throw ShapeError("empty mesh batch");

  num_verts_.resize(verts_list_.size());
  num_faces_.resize(faces_list_.size());
  for (size_t i = 0; i < verts_list_.size(); ++i) {
    int64_t nv = int64_t(verts_list_[i].size());
    if (nv == 0) throw ShapeError("mesh " + std::to_string(i) + " has zero vertices");
    num_verts_[i] = nv;
    num_faces_[i] = int64_t(faces_list_[i].size());
    for (const Face& f : faces_list_[i]) {
      for (int k = 0; k < 3; ++k) {
        int64_t idx = f[k];
        if (idx < 0 || idx >= nv)
          throw IndexError("face index " + std::to_string(idx) + " out of range for mesh " +
                           std::to_string(i) + " with " + std::to_string(nv) + " verts");
      }
    }
  }

  verts_packed_ = pack_lists(verts_list_);
  faces_packed_ = pack_lists(faces_list_);
  for (int64_t i = 0; i < int64_t(faces_list_.size()); ++i) {
    int64_t off = verts_packed_.offsets[size_t(i)];
    for (int64_t j = faces_packed_.offsets[size_t(i)]; j < faces_packed_.offsets[size_t(i + 1)]; ++j) {
      Face& f = faces_packed_.data[size_t(j)];
      f.a += off;
      f.b += off;
      f.c += off;
    }
  }
}

std::vector<Face> MeshBatch::faces_padded(int64_t sentinel) const {
  // local (per-mesh) indices, sentinel in every pad slot
  PackedView<Face> local = pack_lists(faces_list_);
  return packed_to_padded(local, Face{sentinel, sentinel, sentinel});
}

int64_t MeshBatch::max_verts() const {
  int64_t m = 0;
  for (int64_t n : num_verts_) m = std::max(m, n);
  return m;
}

int64_t MeshBatch::max_faces() const {
  int64_t m = 0;
  for (int64_t n : num_faces_) m = std::max(m, n);
  return m;
}

MeshBatch MeshBatch::with_verts(const std::vector<Vec3>& new_verts_packed) const {
  if (int64_t(new_verts_packed.size()) != total_verts())
    throw ShapeError("with_verts: expected " + std::to_string(total_verts()) + " packed verts, got " +
                     std::to_string(new_verts_packed.size()));
  std::vector<std::vector<Vec3>> lists(verts_list_.size());
  for (size_t i = 0; i < verts_list_.size(); ++i) {
    auto b = new_verts_packed.begin() + verts_packed_.offsets[i];
    lists[i].assign(b, b + num_verts_[i]);
  }
  return MeshBatch(std::move(lists), faces_list_);
}

PointCloudBatch::PointCloudBatch(std::vector<std::vector<Vec3>> points_list,
                                 std::optional<std::vector<std::vector<double>>> features_list,
                                 int feature_dim)
    : points_list_(std::move(points_list)), feature_dim_(feature_dim) {
  if (points_list_.empty()) throw ShapeError("empty point cloud batch");
  num_points_.resize(points_list_.size());
  for (size_t i = 0; i < points_list_.size(); ++i) num_points_[i] = int64_t(points_list_[i].size());
  points_packed_ = pack_lists(points_list_);

  if (features_list) {
    if (feature_dim_ <= 0) throw ShapeError("features provided but feature_dim <= 0");
    if (features_list->size() != points_list_.size())
      throw ShapeError("features_list length differs from points_list");
    for (size_t i = 0; i < features_list->size(); ++i) {
      if (int64_t((*features_list)[i].size()) != num_points_[i] * feature_dim_)
        throw ShapeError("feature array length mismatch for cloud " + std::to_string(i));
    }
    features_packed_.reserve(size_t(total_points() * feature_dim_));
    for (const auto& f : *features_list)
      features_packed_.insert(features_packed_.end(), f.begin(), f.end());
  } else {
    feature_dim_ = 0;
  }
}

PointCloudBatch PointCloudBatch::with_points(const std::vector<Vec3>& new_points_packed) const {
  if (int64_t(new_points_packed.size()) != total_points())
    throw ShapeError("with_points: packed size mismatch");
  std::vector<std::vector<Vec3>> lists(points_list_.size());
  std::optional<std::vector<std::vector<double>>> feats;
  if (feature_dim_ > 0) {
    feats.emplace(points_list_.size());
  }
  for (size_t i = 0; i < points_list_.size(); ++i) {
    auto b = new_points_packed.begin() + points_packed_.offsets[i];
    lists[i].assign(b, b + num_points_[i]);
    if (feats) {
      auto fb = features_packed_.begin() + points_packed_.offsets[i] * feature_dim_;
      (*feats)[i].assign(fb, fb + num_points_[i] * feature_dim_);
    }
  }
  return PointCloudBatch(std::move(lists), std::move(feats), feature_dim_);
}

}  // namespace dr
