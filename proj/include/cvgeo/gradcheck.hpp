#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cvgeo/tensor.hpp"

namespace cvgeo {

struct GradCheckReport {
  std::string op_name;
  double max_rel_error = 0.0;
  double eps = 0.0;
  std::size_t checked = 0;  // number of scalar parameters compared
};

/// Compares the tape gradient of a scalar-valued closure against central
/// differences over every element of `inputs`. The closure receives the tape
/// to record on, or nullptr for plain forward evaluation.
template <typename T>
GradCheckReport finite_diff_check(const std::string& op_name,
                                  const std::function<BasicTensor<T>(Tape<T>*)>& op_closure,
                                  std::vector<BasicTensor<T>> inputs, double eps) {
  for (auto& in : inputs) {
    in.set_requires_grad();
    in.drop_grad();
  }
  Tape<T> tape;
  auto out = op_closure(&tape);
  if (out.numel() != 1) throw ShapeError("finite_diff_check: closure must return a scalar");
  if (out.requires_grad()) tape.backward(out);

  GradCheckReport report{op_name, 0.0, eps, 0};
  for (auto& in : inputs) {
    std::vector<T> analytic(in.numel(), T(0));
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const T saved = in[i];
      const T hi = static_cast<T>(saved + eps), lo = static_cast<T>(saved - eps);
      in[i] = hi;
      const double plus = op_closure(nullptr).item();
      in[i] = lo;
      const double minus = op_closure(nullptr).item();
      in[i] = saved;
      // Divide by the step actually taken after rounding to T.
      const double numeric = (plus - minus) / (double(hi) - double(lo));
      const double rel = std::abs(double(analytic[i]) - numeric) / std::max(std::abs(numeric), 1e-8);
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace cvgeo
