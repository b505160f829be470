#include "advspk/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace advspk {

namespace {

double evaluate(const ScalarFunction& f, const Tensor& point) {
  Graph g(false);
  Var x = g.constant(point);
  return f(g, x).value().item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, const Tensor& point, const GradCheckOptions& options) {
  Graph g;
  Var x = g.input(point);
  Var y = f(g, x);
  g.backward(y);
  const Tensor analytic = g.grad(x);

  std::vector<std::size_t> coords;
  if (options.coordinates) {
    coords = *options.coordinates;
  } else {
    coords.resize(point.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  }

  double scale = 0.0;
  for (double v : analytic.data()) scale = std::max(scale, std::fabs(v));
  const double floor = std::max(options.floor, options.scale_floor * scale);

  GradCheckReport report;
  Tensor probe = point;
  for (auto i : coords) {
    const double orig = probe[i];
    probe[i] = orig + options.step;
    const double up = evaluate(f, probe);
    probe[i] = orig - options.step;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
    const double rel = std::fabs(a - numeric) / denom;
    if (rel > report.max_relative_error || report.checked == 0) {
      report.max_relative_error = rel;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace advspk
