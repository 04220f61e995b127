// Core value types, error hierarchy, deterministic RNG and the thread pool
// shim shared by every module.
//
// Conventions:
// - double everywhere; geometry is desk-scale so precision beats footprint.
// - All kernels must be bit-deterministic for a fixed seed regardless of the
//   configured thread count. Parallel loops may only write disjoint ranges;
//   any reduction happens serially in a fixed index order.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dr {

// ---------------------------------------------------------------------------
// Errors

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& m) : std::runtime_error("ShapeError: " + m) {}
};
struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& m) : std::runtime_error("IndexError: " + m) {}
};
struct EmptyInputError : std::runtime_error {
  explicit EmptyInputError(const std::string& m) : std::runtime_error("EmptyInputError: " + m) {}
};
struct DegenerateMeshError : std::runtime_error {
  explicit DegenerateMeshError(const std::string& m) : std::runtime_error("DegenerateMeshError: " + m) {}
};
struct IsolatedVertexError : std::runtime_error {
  explicit IsolatedVertexError(const std::string& m) : std::runtime_error("IsolatedVertexError: " + m) {}
};
struct RangeError : std::runtime_error {
  explicit RangeError(const std::string& m) : std::runtime_error("RangeError: " + m) {}
};
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& m) : std::runtime_error("ParseError: " + m) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error("IoError: " + m) {}
};
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error("UsageError: " + m) {}
};
struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& m) : std::runtime_error("NonFiniteError: " + m) {}
};

// ---------------------------------------------------------------------------
// Small vectors

struct Vec2 {
  double x = 0, y = 0;
  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}
  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm2() const { return x * x + y * y; }
  // z-component of the 2D cross product
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  // 90-degree clockwise rotation; gradient of a signed area wrt one vertex
  Vec2 perp() const { return {y, -x}; }
  bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return x * x + y * y + z * z; }
  double norm() const { return std::sqrt(norm2()); }
  double abs_sum() const { return std::abs(x) + std::abs(y) + std::abs(z); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{};
  }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// Triangle face: three 0-based vertex indices.
struct Face {
  int64_t a = 0, b = 0, c = 0;
  int64_t operator[](int i) const { return i == 0 ? a : (i == 1 ? b : c); }
  bool operator==(const Face& o) const { return a == o.a && b == o.b && c == o.c; }
};

// 3x3 row-major matrix, used for camera rotations.
struct Mat3 {
  double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  static Mat3 identity() { return {}; }
  Vec3 apply(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
  Vec3 apply_transposed(const Vec3& v) const {
    return {m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z};
  }
  Mat3 mul(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        r.m[i][j] = 0;
        for (int k = 0; k < 3; ++k) r.m[i][j] += m[i][k] * o.m[k][j];
      }
    return r;
  }
};

// Rotation about an axis, used by tests and the fit demo to place cameras.
Mat3 axis_angle(const Vec3& axis, double angle);

// ---------------------------------------------------------------------------
// Threads

// Global worker count for parallel_for. 0 = hardware concurrency.
void set_num_threads(int n);
int num_threads();

// Splits [0, n) into contiguous chunks, one worker thread per chunk.
// Callers guarantee disjoint writes; output is then independent of the
// thread count by construction.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// std::mt19937_64 with hand-rolled distributions: the standard distribution
// objects are implementation-defined, which would break seed-fixed
// reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    // splitmix64
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // U[0,1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int64_t uniform_int(int64_t n) { return int64_t(next_u64() % uint64_t(n)); }
  double normal() {
    // Box-Muller, one value per call (the pair's second half is dropped;
    // determinism matters more than throughput here)
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  Vec3 normal_vec3() {
    double a = normal(), b = normal(), c = normal();
    return {a, b, c};
  }

 private:
  uint64_t state_;
};

}  // namespace dr
