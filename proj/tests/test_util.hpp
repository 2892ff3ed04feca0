#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <doctest.h>

#include "gyro/graph.hpp"
#include "gyro/optim.hpp"

namespace gyro::testing {

// Central finite-difference oracle for any scalar graph function of a set of
// parameters. The build function must construct the loss from scratch on the
// given graph so perturbed evaluations are independent of the tape under test.
inline double fd_gradient(const std::function<double()>& eval, double* slot, double h) {
  double original = *slot;
  *slot = original + h;
  double up = eval();
  *slot = original - h;
  double down = eval();
  *slot = original;
  return (up - down) / (2.0 * h);
}

struct FdReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

// Compares analytic gradients (via Graph::backward) against central finite
// differences for every entry of every parameter.
inline FdReport check_gradients(const std::function<gyro::Value(gyro::Graph&)>& build,
                                std::span<gyro::Parameter* const> params, double h = 1e-5,
                                double rel_tol = 1e-4, double floor = 1e-6) {
  auto eval = [&]() {
    gyro::Graph g;
    return build(g).scalar();
  };
  {
    gyro::Graph g;
    gyro::Value loss = build(g);
    g.backward(loss);
  }
  FdReport report;
  for (gyro::Parameter* p : params) {
    for (std::int64_t i = 0; i < p->value.size(); ++i) {
      double analytic = p->grad[i];
      double numeric = fd_gradient(eval, &p->value[i], h);
      double abs_err = std::abs(analytic - numeric);
      double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, rel_err);
      INFO("param ", p->name, " index ", i, " analytic ", analytic, " numeric ", numeric);
      CHECK(rel_err < rel_tol);
    }
  }
  return report;
}

}  // namespace gyro::testing
