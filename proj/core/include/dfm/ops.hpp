#pragma once

#include <cstdint>
#include <span>

#include "dfm/tape.hpp"
#include "dfm/tensor.hpp"

/// Differentiable operators. Every op takes the tape first and records a
/// backward rule when any operand requires a gradient. No broadcasting is
/// performed except for the bias terms of conv2d, linear and batchnorm.
namespace dfm::ops {

/// Cross-correlation of x[N,C,H,W] with kernel[F,C,kh,kw] plus bias[F].
/// bias may be an undefined tensor, meaning no bias.
template <class T>
BasicTensor<T> conv2d(Tape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t pad);

/// x[N,D] * weight[D,M] + bias[M].
template <class T>
BasicTensor<T> linear(Tape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

template <class T>
BasicTensor<T> relu(Tape<T>& tape, const BasicTensor<T>& x);
template <class T>
BasicTensor<T> add(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> sub(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T>
BasicTensor<T> hadamard(Tape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Sum of all entries, as a [1] tensor.
template <class T>
BasicTensor<T> sum(Tape<T>& tape, const BasicTensor<T>& x);

template <class T>
BasicTensor<T> reshape(Tape<T>& tape, const BasicTensor<T>& x, Shape shape);

/// 2x2 window, stride 2. H and W must be even.
template <class T>
BasicTensor<T> maxpool2x2(Tape<T>& tape, const BasicTensor<T>& x);

/// Global spatial average: [N,C,H,W] -> [N,C].
template <class T>
BasicTensor<T> avgpool(Tape<T>& tape, const BasicTensor<T>& x);

struct BatchNormOptions {
  bool training = false;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization of x[N,C,H,W] (or [N,C]). In training mode the
/// batch statistics are used and running_mean / running_var are updated in
/// place (unbiased variance); otherwise the running statistics are used.
template <class T>
BasicTensor<T> batchnorm(Tape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, BasicTensor<T> running_mean, BasicTensor<T> running_var,
                         const BatchNormOptions& opts);

/// Mean over the batch of -log softmax(logits)[label].
template <class T>
BasicTensor<T> softmax_cross_entropy(Tape<T>& tape, const BasicTensor<T>& logits,
                                     std::span<const std::int32_t> labels);

}  // namespace dfm::ops
