#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "dfm/tape.hpp"
#include "dfm/tensor.hpp"

namespace dfm {

enum class Precision { f32, f64 };

struct GradCheckOptions {
  double h = 1e-3;
  /// Precision of the taped (analytic) evaluation. Finite differences always
  /// run on the 64-bit shadow.
  Precision analytic = Precision::f32;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0;
  double numeric_at_worst = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences, returning max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
///
/// fn must be callable as fn(Tape<T>&, const BasicTensor<T>&) for both float
/// and double, returning a single-element tensor built from taped ops.
template <class Fn>
GradCheckResult grad_check_detailed(Fn&& fn, const Tensor& input, const GradCheckOptions& opts = {}) {
  std::vector<double> analytic(input.size(), 0.0);
  auto run_analytic = [&]<class T>(BasicTensor<T> x) {
    x.set_requires_grad(true);
    Tape<T> tape;
    BasicTensor<T> y = fn(tape, x);
    if (y.requires_grad()) {
      tape.backward(y);
      auto g = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) analytic[i] = static_cast<double>(g[i]);
    }
  };
  if (opts.analytic == Precision::f32)
    run_analytic(input.clone());
  else
    run_analytic(input.cast<double>());

  Tensor64 shadow = input.cast<double>();
  shadow.set_requires_grad(false);
  auto eval = [&](const Tensor64& x) {
    Tape<double> tape(Tape<double>::Recording::off);
    return static_cast<double>(fn(tape, x).item());
  };
  GradCheckResult result;
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    const double saved = shadow[i];
    shadow[i] = saved + opts.h;
    const double up = eval(shadow);
    shadow[i] = saved - opts.h;
    const double down = eval(shadow);
    shadow[i] = saved;
    const double numeric = (up - down) / (2 * opts.h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (i == 0 || err > result.max_rel_error)
      result = GradCheckResult{err, i, analytic[i], numeric};
  }
  return result;
}

template <class Fn>
double grad_check(Fn&& fn, const Tensor& input, double h = 1e-3) {
  return grad_check_detailed(std::forward<Fn>(fn), input, GradCheckOptions{h, Precision::f32}).max_rel_error;
}

}  // namespace dfm
