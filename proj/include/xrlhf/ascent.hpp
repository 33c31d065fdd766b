#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "xrlhf/errors.hpp"
#include "xrlhf/kernels.hpp"

namespace xrlhf {

struct AscentOptions {
  double learning_rate = 1.0;
  std::size_t max_steps = 1000;
  double grad_tolerance = 1e-8;
};

struct AscentResult {
  std::vector<double> x;
  std::vector<double> history;  ///< objective after each accepted step
  std::size_t steps = 0;
  bool converged = false;
};

/// Full-batch gradient ascent. A step that would lower the objective is
/// halved until it does not; the next step starts again from the base rate.
inline AscentResult gradient_ascent(const std::function<double(std::span<const double>)>& value,
                                    const std::function<std::vector<double>(std::span<const double>)>& grad,
                                    std::vector<double> x, const AscentOptions& options) {
  AscentResult out;
  double fx = value(x);
  if (!std::isfinite(fx)) throw SolverError("gradient ascent: non-finite objective at the start");
  auto g = grad(x);
  std::vector<double> candidate(x.size());
  for (std::size_t step = 0; step < options.max_steps; ++step) {
    if (std::sqrt(kernels::squared_norm(g)) <= options.grad_tolerance) {
      out.converged = true;
      break;
    }
    double lr = options.learning_rate;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, lr *= 0.5) {
      for (std::size_t j = 0; j < x.size(); ++j) candidate[j] = x[j] + lr * g[j];
      const double next = value(candidate);
      if (!std::isfinite(next)) throw SolverError("gradient ascent: non-finite objective; lower the learning rate");
      if (next >= fx) {
        x.swap(candidate);
        fx = next;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    g = grad(x);
    out.history.push_back(fx);
    ++out.steps;
  }
  out.x = std::move(x);
  return out;
}

}  // namespace xrlhf
