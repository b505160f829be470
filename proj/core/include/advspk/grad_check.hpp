#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "advspk/graph.hpp"

namespace advspk {

/// Builds a scalar on the given graph from a single input variable.
using ScalarFunction = std::function<Var(Graph&, Var)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Absolute denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-8;
  /// The floor is raised to scale_floor * max_i |analytic_i|, so components far
  /// below the gradient's magnitude are judged against finite-difference roundoff.
  double scale_floor = 1e-4;
  /// When set, only these flat coordinates are probed.
  std::optional<std::vector<std::size_t>> coordinates;
};

struct GradCheckReport {
  bool passed = false;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the reverse-mode gradient of f at point with central finite differences.
GradCheckReport grad_check(const ScalarFunction& f, const Tensor& point, const GradCheckOptions& options = {});

}  // namespace advspk
