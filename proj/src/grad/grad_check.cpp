#include "imanip/grad/grad_check.hpp"

#include <cmath>

#include "imanip/errors.hpp"

namespace imanip::grad {

GradCheckReport grad_check(const LossFn& f, const ParameterSet& params, double h, double floor) {
  GradCheckReport report;
  GradientMap analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor loss = f(params.bind(&tape));
    if (!loss.all_finite()) {
      report.finite = false;
      report.message = "loss is non-finite at the base point";
      return report;
    }
    analytic = tape.backward(loss);
  }

  ParameterSet probe = params;
  for (const auto& name : params.trainable_names()) {
    const Tensor base = params.get(name);
    const auto grad_it = analytic.find(name);
    for (std::size_t i = 0; i < base.numel(); ++i) {
      Tensor plus = base, minus = base;
      plus.mutable_data()[i] += h;
      minus.mutable_data()[i] -= h;
      probe.set(name, plus);
      double fp = 0.0, fm = 0.0;
      try {
        fp = f(probe.bind(nullptr)).item();
        probe.set(name, minus);
        fm = f(probe.bind(nullptr)).item();
      } catch (const ContractError& e) {
        report.finite = false;
        report.worst_param = name;
        report.worst_index = i;
        report.message = std::string("non-finite evaluation: ") + e.what();
        return report;
      }
      probe.set(name, base);
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        report.finite = false;
        report.worst_param = name;
        report.worst_index = i;
        report.message = "non-finite loss at " + name + "[" + std::to_string(i) + "]";
        return report;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = grad_it == analytic.end() ? 0.0 : grad_it->second[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace imanip::grad
