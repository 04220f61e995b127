#include "dr/core.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

namespace dr {

Mat3 axis_angle(const Vec3& axis, double angle) {
  Vec3 u = axis.normalized();
  double c = std::cos(angle), s = std::sin(angle), t = 1 - c;
  Mat3 r;
  r.m[0][0] = c + u.x * u.x * t;
  r.m[0][1] = u.x * u.y * t - u.z * s;
  r.m[0][2] = u.x * u.z * t + u.y * s;
  r.m[1][0] = u.y * u.x * t + u.z * s;
  r.m[1][1] = c + u.y * u.y * t;
  r.m[1][2] = u.y * u.z * t - u.x * s;
  r.m[2][0] = u.z * u.x * t - u.y * s;
  r.m[2][1] = u.z * u.y * t + u.x * s;
  r.m[2][2] = c + u.z * u.z * t;
  return r;
}

namespace {
std::atomic<int> g_num_threads{0};

int resolve_threads() {
  int n = g_num_threads.load();
  if (n > 0) return n;
  if (const char* env = std::getenv("DR3D_THREADS")) {
    int e = std::atoi(env);
    if (e > 0) return e;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}
}  // namespace

void set_num_threads(int n) { g_num_threads.store(n); }
int num_threads() { return resolve_threads(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
  if (n <= 0) return;
  int workers = resolve_threads();
  if (workers <= 1 || n == 1) {
    body(0, n);
    return;
  }
  int64_t nt = std::min<int64_t>(workers, n);
  int64_t chunk = (n + nt - 1) / nt;
  std::vector<std::thread> threads;
  threads.reserve(size_t(nt));
  for (int64_t t = 0; t < nt; ++t) {
    int64_t begin = t * chunk;
    int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& th : threads) th.join();
}

}  // namespace dr
