#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "hypermsg/tensor.hpp"

namespace hypermsg {

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  double step = 0.0;
  double tolerance = 0.0;
  int checked_coords = 0;
  // location and values of the worst coordinate, for diagnostics
  int worst_param = -1;
  int worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central-difference gradient oracle. `f` must rebuild the loss from the
/// current parameter values and be deterministic (dropout and sampling
/// disabled). The oracle never reuses the tape gradient path it checks:
/// numeric values come from plain forward evaluations.
inline GradCheckReport finite_diff_check(const std::function<Tensor(Tape&)>& f, std::vector<Tensor>& params,
                                         double step = 1e-5, double tolerance = 1e-4) {
  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;

  for (Tensor& p : params) p.zero_grad();
  Tape tape;
  Tensor loss = f(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) analytic.push_back(p.grad());

  Tape no_tape(false);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& theta = params[pi].mutable_value();
    for (size_t ci = 0; ci < theta.size(); ++ci) {
      const double saved = theta[ci];
      theta[ci] = saved + step;
      const double up = f(no_tape).scalar();
      theta[ci] = saved - step;
      const double down = f(no_tape).scalar();
      theta[ci] = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[pi][ci];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      report.checked_coords++;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = static_cast<int>(pi);
        report.worst_coord = static_cast<int>(ci);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  for (Tensor& p : params) p.zero_grad();
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace hypermsg
