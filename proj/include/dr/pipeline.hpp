// High-level orchestration shared by the CLI and the integration tests:
// scene rendering, silhouette fitting by gradient descent, and the
// benchmark harness.
#pragma once

#include <string>
#include <vector>

#include "dr/batching.hpp"
#include "dr/camera.hpp"
#include "dr/io.hpp"
#include "dr/mesh_raster.hpp"
#include "dr/point_render.hpp"
#include "dr/shading.hpp"

namespace dr {

enum class ShaderKind { Silhouette, Hard, Softmax };

struct SceneConfig {
  // exactly one geometry source: a file path or a template spec
  // ("sphere:<level>", "cube", "cube:<n>")
  std::string mesh_path;
  std::string template_spec = "sphere:2";
  double camera_distance = 3.0;
  double focal_length = 2.0;
  ProjectionKind projection = ProjectionKind::Perspective;
  double view_angle = 0.0;  // rotation about +y, radians
  RasterSettings raster;
  ShaderKind shader = ShaderKind::Silhouette;
  LightingModel lighting = LightingModel::Phong;
  BlendParams blend;
  DirectionalLight light;
  std::string output_path = "render.png";
};

struct StageTiming {
  std::string stage;
  double ms;
};

struct RenderResult {
  Image image;                 // RGB or RGBA
  std::vector<double> alpha;   // H*W silhouette
  std::vector<StageTiming> timings;
};

MeshBatch load_scene_mesh(const SceneConfig& cfg);
Camera scene_camera(const SceneConfig& cfg);
RenderResult render_scene(const SceneConfig& cfg);

struct FitConfig {
  std::string target_path;              // OBJ path, or empty to use target_spec
  std::string target_spec = "sphere:2"; // template spec for synthetic targets
  double target_scale = 1.0;
  int template_level = 2;
  int num_views = 2;
  int iterations = 400;
  double step_size = 0.01;  // Adam learning rate
  double lambda_laplacian = 19.0;
  double lambda_edge = 0.2;
  int image_size = 64;
  int faces_per_pixel = 24;
  // Coarse-to-fine schedule: the first coarse_fraction of the iterations run
  // with a wide blur band (gradient support far from the predicted rim), the
  // remainder with the narrow band below (sharp masks, low IoU floor). Target
  // silhouettes are re-rendered at the switch. Set coarse_fraction to 0 to
  // optimize with the fine band throughout.
  double coarse_blur_radius = 4e-3;  // squared NDC
  double coarse_sigma = 2e-3;
  double coarse_fraction = 0.6;
  double blur_radius = 1e-4;  // squared NDC
  double sigma = 1e-5;
  double camera_distance = 3.0;
  double focal_length = 2.0;
  std::string output_mesh;   // OBJ path, empty to skip
  std::string output_trace;  // CSV path, empty to skip
};

struct FitTraceRow {
  int iter;
  double l_s, l_l, l_e, total;
};

struct FitResult {
  MeshBatch mesh;
  std::vector<FitTraceRow> trace;
  double final_silhouette_loss = 0;  // mean over views at the last iteration
};

// Renders target silhouettes once per view, then descends the template
// sphere's vertices on sum_views L_s + lambda_l L_l + lambda_e L_e.
// Throws NonFiniteError if the loss diverges.
FitResult fit_silhouette(const FitConfig& cfg);

struct BenchRow {
  std::string op;
  std::string config;
  double mean_ms;
  double median_ms;
  int64_t peak_bytes;  // dominant working buffers
};

// 5 random batches x 10 runs per batch unless overridden
struct BenchConfig {
  int batches = 5;
  int runs = 10;
  uint64_t seed = 0;
};

BenchRow bench_knn(const BenchConfig& b, int batch_size, int64_t n_points, int k);
BenchRow bench_chamfer_knn(const BenchConfig& b, int batch_size, int64_t np, int64_t nq);
BenchRow bench_chamfer_dense(const BenchConfig& b, int batch_size, int64_t np, int64_t nq);
BenchRow bench_graph_conv(const BenchConfig& b, int batch_size, double mean_faces, int dim);
BenchRow bench_rasterize(const BenchConfig& b, bool tiled, double mean_faces, int image, int k);
BenchRow bench_composite(const BenchConfig& b, CompositeMode mode, int64_t n_points, int image,
                         int k);

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);
void write_trace_csv(const std::string& path, const std::vector<FitTraceRow>& rows);

}  // namespace dr
