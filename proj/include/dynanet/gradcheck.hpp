#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "dynanet/ops.hpp"

namespace dynanet {

struct GradCheckOptions {
  // Central-difference step.
  double step = 1e-5;
  // Denominator floor, as a fraction of the largest numeric gradient magnitude.
  // Keeps entries whose true gradient is ~0 from dividing rounding noise by ~0.
  double scale_floor = 1e-3;
  // Elements to skip (non-differentiable points). Arguments: input index, element index.
  std::function<bool(std::size_t, Index)> exclude;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  Index worst_element = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients at precision `Scalar` against central
// differences of the same function evaluated in double precision.
//
// `fn` must be callable as fn(Tape<S>&, const std::vector<Var<S>>&) -> Var<S>
// for both S = Scalar and S = double (a generic lambda works), and must
// return a scalar. The numeric oracle is evaluated at the Scalar-rounded
// inputs so both sides see the same point.
template <class Scalar, class Fn>
GradCheckReport grad_check(Fn&& fn, const std::vector<Tensor<double>>& inputs, const GradCheckOptions& opt = {}) {
  std::vector<Tensor<double>> point;
  point.reserve(inputs.size());
  for (const auto& t : inputs) point.push_back(t.template cast<Scalar>().template cast<double>());

  std::vector<Tensor<Scalar>> analytic;
  {
    Tape<Scalar> tape;
    std::vector<Var<Scalar>> vars;
    for (const auto& t : point) vars.push_back(tape.leaf(t.template cast<Scalar>()));
    Var<Scalar> out = fn(tape, vars);
    auto grads = tape.backward(out);
    for (const auto& v : vars) analytic.push_back(grads[v]);
  }

  auto evaluate = [&](const std::vector<Tensor<double>>& at) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : at) vars.push_back(tape.constant(t));
    return fn(tape, vars).item();
  };

  std::vector<std::vector<double>> numeric(point.size());
  double scale = 0.0;
  std::vector<Tensor<double>> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    numeric[i].assign(static_cast<std::size_t>(point[i].size()), std::numeric_limits<double>::quiet_NaN());
    for (Index j = 0; j < point[i].size(); ++j) {
      if (opt.exclude && opt.exclude(i, j)) continue;
      const double x0 = point[i][j];
      probe[i][j] = x0 + opt.step;
      const double plus = evaluate(probe);
      probe[i][j] = x0 - opt.step;
      const double minus = evaluate(probe);
      probe[i][j] = x0;
      const double cd = (plus - minus) / (2.0 * opt.step);
      numeric[i][static_cast<std::size_t>(j)] = cd;
      scale = std::max(scale, std::abs(cd));
    }
  }

  GradCheckReport report;
  const double floor = std::max(opt.scale_floor * scale, std::numeric_limits<double>::min());
  for (std::size_t i = 0; i < point.size(); ++i) {
    for (Index j = 0; j < point[i].size(); ++j) {
      const double cd = numeric[i][static_cast<std::size_t>(j)];
      if (std::isnan(cd)) continue;
      const double a = static_cast<double>(analytic[i][j]);
      const double err = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), floor});
      ++report.checked;
      if (err > report.max_rel_error || !std::isfinite(err)) {
        report.max_rel_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
        report.worst_input = i;
        report.worst_element = j;
        report.worst_analytic = a;
        report.worst_numeric = cd;
      }
    }
  }
  return report;
}

}  // namespace dynanet
