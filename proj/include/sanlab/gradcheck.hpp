#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sanlab/tensor.hpp"

namespace sanlab {

// Worst relative error between an analytic gradient and central differences,
// taken over all coordinates. Runs in double; the denominator floors at 1e-8
// so exact zeros do not blow up the ratio.
inline double finite_difference_check(const std::function<double(const TensorT<double>&)>& fn,
                                      TensorT<double>& point,
                                      const TensorT<double>& analytic, double eps) {
  if (eps <= 0.0) throw DataError("gradcheck: eps must be positive");
  if (!analytic.same_shape(point)) throw ShapeError("gradcheck: gradient shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    const double x0 = point.data[i];
    point.data[i] = x0 + eps;
    const double fp = fn(point);
    point.data[i] = x0 - eps;
    const double fm = fn(point);
    point.data[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("gradcheck: non-finite loss at perturbed point");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.data[i];
    const double rel = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

// Same check over a set of named parameter tensors perturbed jointly.
inline double finite_difference_check_many(
    const std::function<double()>& fn, std::vector<TensorT<double>*> points,
    std::vector<const TensorT<double>*> analytic, double eps) {
  if (eps <= 0.0) throw DataError("gradcheck: eps must be positive");
  if (points.size() != analytic.size()) throw ShapeError("gradcheck: point/grad count mismatch");
  double worst = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    TensorT<double>& t = *points[p];
    const TensorT<double>& a = *analytic[p];
    if (!a.same_shape(t)) throw ShapeError("gradcheck: gradient shape mismatch");
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double x0 = t.data[i];
      t.data[i] = x0 + eps;
      const double fp = fn();
      t.data[i] = x0 - eps;
      const double fm = fn();
      t.data[i] = x0;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("gradcheck: non-finite loss at perturbed point");
      const double numeric = (fp - fm) / (2.0 * eps);
      const double rel = std::abs(a.data[i] - numeric) /
                         std::max({std::abs(a.data[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace sanlab
