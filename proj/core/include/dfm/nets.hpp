#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dfm/ops.hpp"
#include "dfm/params.hpp"

namespace dfm::nets {

enum class Arch { lenet, resnet_small };

std::string arch_name(Arch arch);
/// Accepts "lenet" and "resnet-small"; anything else throws std::invalid_argument.
Arch parse_arch(const std::string& name);

struct ArchitectureSpec {
  Arch arch = Arch::lenet;
  Shape input;                        // [C,H,W]
  std::size_t classes = 10;
  std::vector<std::size_t> widths;    // output channels per block
  std::size_t hidden = 120;           // lenet dense width; unused by resnet-small

  std::size_t num_blocks() const { return widths.size(); }
};

/// Classic LeNet-5 layout: conv5x5(6)+pool / conv5x5(16)+pool, dense 120, dense M.
ArchitectureSpec lenet(Shape input = {1, 28, 28}, std::size_t classes = 10);
/// Width-reduced ResNet18: stem + four stages of two basic units, strides 1,2,2,2.
ArchitectureSpec resnet_small(Shape input = {3, 32, 32}, std::size_t classes = 10);

/// Per-block output shapes [c,h,w] implied by the spec. Throws ShapeError when
/// the input size cannot flow through the architecture.
std::vector<Shape> tap_shapes(const ArchitectureSpec& spec);

/// Parameters enter the tape detached when param_grads is false, so attacks
/// can differentiate w.r.t. the input without touching parameter gradients.
struct RunMode {
  bool training = false;
  bool param_grads = true;
};

/// Replaces a block's feature map before the next block consumes it.
template <class T>
using BlockHook = std::function<BasicTensor<T>(Tape<T>&, const BasicTensor<T>&)>;

template <class T>
class BlockModel {
 public:
  struct Output {
    BasicTensor<T> logits;
    std::vector<BasicTensor<T>> features;  // f_1..f_K, after any hook
  };

  BlockModel(ArchitectureSpec spec, ParamStore<T> params);

  const ArchitectureSpec& spec() const { return spec_; }
  std::size_t num_blocks() const { return spec_.num_blocks(); }
  const std::vector<Shape>& tap_shapes() const { return taps_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  /// hooks is either empty or has one (possibly empty) entry per block.
  Output forward_with_taps(Tape<T>& tape, const BasicTensor<T>& x, const RunMode& mode,
                           const std::vector<BlockHook<T>>& hooks = {}) const;
  BasicTensor<T> forward(Tape<T>& tape, const BasicTensor<T>& x, const RunMode& mode) const {
    return forward_with_taps(tape, x, mode).logits;
  }

  /// Deep copy (optionally at another precision).
  template <class U = T>
  BlockModel<U> cast() const {
    return BlockModel<U>(spec_, params_.template cast<U>());
  }

 private:
  BasicTensor<T> run_block(Tape<T>& tape, std::size_t block, const BasicTensor<T>& x, const RunMode& mode) const;
  BasicTensor<T> run_head(Tape<T>& tape, const BasicTensor<T>& x, const RunMode& mode) const;

  ArchitectureSpec spec_;
  std::vector<Shape> taps_;
  ParamStore<T> params_;
};

/// He-style (fan-in) initialization, deterministic in seed. All trainable
/// tensors require grad; batchnorm buffers start at mean 0, variance 1.
BlockModel<float> build_model(const ArchitectureSpec& spec, std::uint64_t seed);

/// Shared helpers for components built from the same layer vocabulary.
namespace layers {

template <class T>
BasicTensor<T> param(const ParamStore<T>& store, const std::string& name, const RunMode& mode) {
  const auto& p = store.get(name);
  return mode.param_grads ? p : p.detach();
}

/// conv (no bias) -> batchnorm, parameters under prefix.{w,bn.gamma,bn.beta,bn.mean,bn.var}
template <class T>
BasicTensor<T> conv_bn(Tape<T>& tape, const ParamStore<T>& store, const std::string& prefix,
                       const BasicTensor<T>& x, std::size_t stride, std::size_t pad, const RunMode& mode) {
  auto y = ops::conv2d(tape, x, param(store, prefix + ".w", mode), BasicTensor<T>{}, stride, pad);
  return ops::batchnorm(tape, y, param(store, prefix + ".bn.gamma", mode), param(store, prefix + ".bn.beta", mode),
                        store.get(prefix + ".bn.mean"), store.get(prefix + ".bn.var"),
                        ops::BatchNormOptions{mode.training, 0.1, 1e-5});
}

/// Registers the tensors conv_bn expects.
void add_conv_bn(ParamStore<float>& store, const std::string& prefix, std::size_t in, std::size_t out,
                 std::size_t k, std::uint64_t seed);
/// He-normal tensor of the given shape; the stream is addressed by name.
Tensor he_normal(const Shape& shape, std::size_t fan_in, std::uint64_t seed, const std::string& name);

}  // namespace layers

extern template class BlockModel<float>;
extern template class BlockModel<double>;

}  // namespace dfm::nets
