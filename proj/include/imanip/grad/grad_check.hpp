#pragma once

#include <functional>
#include <string>

#include "imanip/grad/params.hpp"

namespace imanip::grad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  bool finite = true;
  std::string message;  // set when a non-finite value was met

  bool ok(double tolerance) const { return finite && max_rel_error <= tolerance; }
};

// Loss builder evaluated against bound parameters; must be deterministic.
using LossFn = std::function<Tensor(const BoundParams&)>;

// Compares reverse-mode gradients of every trainable coordinate against
// central differences (f(p+h) − f(p−h)) / 2h.
// Relative error is |a − n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const LossFn& f, const ParameterSet& params, double h = 1e-5, double floor = 1e-6);

}  // namespace imanip::grad
