#pragma once

// Gradient-check cases covering every differentiable operator and argument.

#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dfm/grad_check.hpp"
#include "dfm/ops.hpp"
#include "oracles.hpp"

namespace gradcases {

using namespace dfm;

template <class T>
BasicTensor<T> as(const Tensor& t) {
  if (!t.defined()) return {};
  auto c = t.cast<T>();
  c.set_requires_grad(false);
  return c;
}

// sum(y * r) for a fixed random r, so every output coordinate matters.
template <class T>
BasicTensor<T> weighted_sum(Tape<T>& tape, const BasicTensor<T>& y, std::uint64_t seed) {
  return ops::sum(tape, ops::hadamard(tape, y, as<T>(oracle::random_tensor(y.shape(), seed ^ 0xabc))));
}

// Values bounded away from zero so relu kinks stay outside the FD stencil.
inline Tensor away_from_zero(const Shape& shape, std::uint64_t seed) {
  auto t = oracle::random_tensor(shape, seed);
  for (auto& v : t.data()) v = v < 0 ? v - 0.1f : v + 0.1f;
  return t;
}

// Distinct values 0.01 apart so maxpool argmaxes are stable under +-h.
inline Tensor distinct(const Shape& shape, std::uint64_t seed) {
  std::vector<float> v(numel(shape));
  std::iota(v.begin(), v.end(), 0.0f);
  CounterStream s(seed, 9);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[s.next_u32() % i]);
  for (auto& x : v) x *= 0.01f;
  return Tensor::from(shape, v);
}

using ErrorList = std::vector<std::pair<std::string, double>>;

// Max relative error per (operator.argument / precision) for one seed, with
// 32- and 64-bit analytic passes against 64-bit central differences (h = 1e-3).
inline ErrorList operator_errors(std::uint64_t seed) {
  ErrorList errors;
  auto check = [&](const std::string& name, auto fn, const Tensor& input) {
    for (auto p : {Precision::f32, Precision::f64})
      errors.emplace_back(name + (p == Precision::f32 ? "/f32" : "/f64"),
                          grad_check_detailed(fn, input, GradCheckOptions{1e-3, p}).max_rel_error);
  };

  const auto x = oracle::random_tensor({2, 2, 5, 5}, seed), w = oracle::random_tensor({3, 2, 3, 3}, seed + 1);
  const auto b = oracle::random_tensor({3}, seed + 2);
  check("conv2d.x", [&](auto& t, const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return weighted_sum(t, ops::conv2d(t, v, as<T>(w), as<T>(b), 2, 1), seed);
  }, x);
  check("conv2d.w", [&](auto& t, const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return weighted_sum(t, ops::conv2d(t, as<T>(x), v, as<T>(b), 1, 1), seed);
  }, w);
  check("conv2d.b", [&](auto& t, const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return weighted_sum(t, ops::conv2d(t, as<T>(x), as<T>(w), v, 1, 0), seed);
  }, b);

  const auto lx = oracle::random_tensor({3, 4}, seed + 3), lw = oracle::random_tensor({4, 5}, seed + 4);
  const auto lb = oracle::random_tensor({5}, seed + 5);
  check("linear.x", [&](auto& t, const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return weighted_sum(t, ops::linear(t, v, as<T>(lw), as<T>(lb)), seed);
  }, lx);
  check("linear.w", [&](auto& t, const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return weighted_sum(t, ops::linear(t, as<T>(lx), v, as<T>(lb)), seed);
  }, lw);
  check("linear.b", [&](auto& t, const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return weighted_sum(t, ops::linear(t, as<T>(lx), as<T>(lw), v), seed);
  }, lb);

  const auto e = away_from_zero({3, 4}, seed + 6), other = oracle::random_tensor({3, 4}, seed + 7);
  check("relu", [&](auto& t, const auto& v) { return weighted_sum(t, ops::relu(t, v), seed); }, e);
  check("add", [&](auto& t, const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return weighted_sum(t, ops::add(t, v, as<T>(other)), seed);
  }, e);
  check("sub", [&](auto& t, const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return weighted_sum(t, ops::sub(t, as<T>(other), v), seed);
  }, e);
  check("hadamard", [&](auto& t, const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return weighted_sum(t, ops::hadamard(t, v, as<T>(other)), seed);
  }, e);
  check("sum", [&](auto& t, const auto& v) { return ops::sum(t, v); }, e);
  check("reshape", [&](auto& t, const auto& v) { return weighted_sum(t, ops::reshape(t, v, {4, 3}), seed); }, e);
  check("maxpool2x2", [&](auto& t, const auto& v) { return weighted_sum(t, ops::maxpool2x2(t, v), seed); },
        distinct({2, 2, 4, 6}, seed));
  check("avgpool", [&](auto& t, const auto& v) { return weighted_sum(t, ops::avgpool(t, v), seed); },
        oracle::random_tensor({2, 3, 4, 4}, seed + 8));

  const auto bx = oracle::random_tensor({4, 3, 2, 2}, seed + 9);
  const auto gamma = oracle::random_tensor({3}, seed + 10, 0.5, 1.5), beta = oracle::random_tensor({3}, seed + 11);
  for (bool training : {true, false}) {
    const std::string mode = training ? "train" : "eval";
    auto bn = [&, training](auto& t, const auto& xv, const auto& g, const auto& bt) {
      using T = typename std::decay_t<decltype(xv)>::value_type;
      auto rm = as<T>(oracle::random_tensor({3}, seed + 12)), rv = as<T>(oracle::random_tensor({3}, seed + 13, 0.5, 2));
      return weighted_sum(t, ops::batchnorm(t, xv, g, bt, rm, rv, ops::BatchNormOptions{training}), seed);
    };
    check("batchnorm." + mode + ".x", [&](auto& t, const auto& v) {
      using T = typename std::decay_t<decltype(v)>::value_type;
      return bn(t, v, as<T>(gamma), as<T>(beta));
    }, bx);
    check("batchnorm." + mode + ".gamma", [&](auto& t, const auto& v) {
      using T = typename std::decay_t<decltype(v)>::value_type;
      return bn(t, as<T>(bx), v, as<T>(beta));
    }, gamma);
    check("batchnorm." + mode + ".beta", [&](auto& t, const auto& v) {
      using T = typename std::decay_t<decltype(v)>::value_type;
      return bn(t, as<T>(bx), as<T>(gamma), v);
    }, beta);
  }

  std::vector<std::int32_t> labels{static_cast<std::int32_t>(seed % 10), 3, 9};
  check("softmax_cross_entropy", [&](auto& t, const auto& v) { return ops::softmax_cross_entropy(t, v, labels); },
        oracle::random_tensor({3, 10}, seed + 14, -3, 3));

  return errors;
}

}  // namespace gradcases
