#pragma once

#include <string>
#include <vector>

#include "dynanet/gradcheck.hpp"

namespace dynanet {

struct GradCase {
  std::string name;
  std::size_t seeds = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct GradSuiteResult {
  double tolerance = 0.0;
  std::vector<GradCase> cases;

  bool passed() const {
    for (const auto& c : cases) {
      if (!(c.max_rel_error < tolerance)) return false;
    }
    return !cases.empty();
  }
};

// 1e-3 for float, 1e-6 for double.
template <class Scalar>
constexpr double grad_tolerance() {
  return sizeof(Scalar) >= sizeof(double) ? 1e-6 : 1e-3;
}

// Finite-difference check of every differentiable op, network block and
// loss on `seeds` random inputs each. Gradients are taken at precision
// `Scalar`; the numeric reference is always evaluated in double.
template <class Scalar>
GradSuiteResult run_grad_suite(std::size_t seeds = 10);

extern template GradSuiteResult run_grad_suite<float>(std::size_t);
extern template GradSuiteResult run_grad_suite<double>(std::size_t);

}  // namespace dynanet
