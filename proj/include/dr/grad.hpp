// The differentiability contract: a uniform vjp interface over flat double
// vectors, explicit composition, and a finite-difference verification
// harness. There is no tape; every operation ships a hand-written backward
// and pipelines are chained explicitly.
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dr/core.hpp"

namespace dr {

// Named cotangent accumulator aligned with packed primal storage.
// Addition is the only mutation.
class GradBuffer {
 public:
  std::vector<double>& slot(const std::string& name, size_t size) {
    auto& v = data_[name];
    if (v.empty()) v.assign(size, 0.0);
    if (v.size() != size) throw ShapeError("GradBuffer slot '" + name + "' size mismatch");
    return v;
  }
  const std::vector<double>& get(const std::string& name) const { return data_.at(name); }
  bool has(const std::string& name) const { return data_.count(name) > 0; }
  void add(const std::string& name, const std::vector<double>& g) {
    auto& v = slot(name, g.size());
    for (size_t i = 0; i < g.size(); ++i) v[i] += g[i];
  }
  const std::map<std::string, std::vector<double>>& entries() const { return data_; }

 private:
  std::map<std::string, std::vector<double>> data_;
};

// One differentiable operation over flat vectors. backward(0) = 0 and
// backward is linear in the cotangent.
struct DifferentiableOp {
  std::string name;
  std::function<std::vector<double>(const std::vector<double>&)> forward;
  // vjp: (primal input, output cotangent) -> input cotangent
  std::function<std::vector<double>(const std::vector<double>&, const std::vector<double>&)> vjp;
};

// forward chains left to right; backward chains in reverse
DifferentiableOp compose(const std::vector<DifferentiableOp>& ops);

struct FdCheckResult {
  double max_rel_error = 0;
  int directions = 0;
};

// Compares vjp-derived directional derivatives u^T J d against central
// differences over random unit directions. eps scales with the input
// magnitude; relative errors use an absolute floor of 1e-8.
FdCheckResult fd_check(const DifferentiableOp& op, const std::vector<double>& x,
                       double eps = 1e-4, int directions = 8, uint64_t seed = 7);

// Registry behind the `gradcheck` CLI subcommand: named checks with their
// pass thresholds.
struct RegisteredCheck {
  std::string name;
  double tolerance;
  std::function<FdCheckResult()> run;
};
std::vector<RegisteredCheck> standard_gradcheck_suite();

}  // namespace dr
