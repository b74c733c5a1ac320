#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "genparse/graph.hpp"

namespace genparse {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst;  // "name[index]" of the worst coordinate
};

// Gradients whose magnitude is below kGradFloor are compared on an absolute
// scale: in double precision a difference quotient cannot resolve them.
inline constexpr double kGradFloor = 1e-7;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(kGradFloor, std::abs(analytic) + std::abs(numeric));
}

// Compares backward() against five-point central differences. `loss_fn` builds the
// scalar loss on the graph it is given and must be deterministic.
// `per_param` > 0 samples that many coordinates from each parameter; 0 checks
// every coordinate.
template <typename Real, typename LossFn>
GradCheckResult grad_check(ParameterStore<Real>& store, LossFn&& loss_fn, double step = 1e-3,
                           std::size_t per_param = 0, std::uint64_t seed = 7) {
  store.zero_grad();
  {
    Graph<Real> g;
    g.backward(loss_fn(g));
  }
  auto evaluate = [&] {
    Graph<Real> g(false);
    return static_cast<double>(g.scalar_value(loss_fn(g)));
  };

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (std::size_t pi = 0; pi < store.size(); ++pi) {
    Parameter<Real>& p = store[pi];
    const std::size_t n = p.value.size();
    const std::size_t count = per_param == 0 ? n : std::min(per_param, n);
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t i =
          per_param == 0 ? s : std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      const Real saved = p.value[i];
      auto at = [&](double offset) {
        p.value[i] = saved + static_cast<Real>(offset);
        return evaluate();
      };
      const double numeric =
          (at(-2 * step) - 8 * at(-step) + 8 * at(step) - at(2 * step)) / (12 * step);
      p.value[i] = saved;
      const double err = relative_error(static_cast<double>(p.grad[i]), numeric);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace genparse
