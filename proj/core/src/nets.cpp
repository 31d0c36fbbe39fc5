#include "dfm/nets.hpp"

#include <cmath>

#include "dfm/random.hpp"

namespace dfm::nets {

std::string arch_name(Arch arch) { return arch == Arch::lenet ? "lenet" : "resnet-small"; }

Arch parse_arch(const std::string& name) {
  if (name == "lenet") return Arch::lenet;
  if (name == "resnet-small") return Arch::resnet_small;
  throw std::invalid_argument("unknown architecture '" + name + "' (expected lenet or resnet-small)");
}

ArchitectureSpec lenet(Shape input, std::size_t classes) {
  return ArchitectureSpec{Arch::lenet, std::move(input), classes, {6, 16}, 120};
}

ArchitectureSpec resnet_small(Shape input, std::size_t classes) {
  return ArchitectureSpec{Arch::resnet_small, std::move(input), classes, {16, 32, 64, 128}, 0};
}

namespace {

constexpr std::size_t kResnetStrides[] = {1, 2, 2, 2};

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < k) throw ShapeError("input too small for architecture");
  return (in + 2 * pad - k) / stride + 1;
}

std::size_t pool_out(std::size_t in) {
  if (in % 2) throw ShapeError("architecture requires an even spatial size before pooling, got " + std::to_string(in));
  return in / 2;
}

std::string block_prefix(std::size_t k) { return "b" + std::to_string(k + 1); }

std::uint64_t name_hash(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : name) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

}  // namespace

std::vector<Shape> tap_shapes(const ArchitectureSpec& spec) {
  if (spec.input.size() != 3) throw ShapeError("architecture input must be [C,H,W], got " + to_string(spec.input));
  if (spec.classes < 2) throw std::invalid_argument("architecture needs at least two classes");
  std::vector<Shape> taps;
  std::size_t h = spec.input[1], w = spec.input[2];
  if (spec.arch == Arch::lenet) {
    if (spec.widths.size() != 2) throw std::invalid_argument("lenet has exactly 2 blocks");
    for (std::size_t k = 0; k < 2; ++k) {
      h = pool_out(conv_out(h, 5, 1, 0));
      w = pool_out(conv_out(w, 5, 1, 0));
      taps.push_back({spec.widths[k], h, w});
    }
  } else {
    if (spec.widths.size() != 4) throw std::invalid_argument("resnet-small has exactly 4 blocks");
    for (std::size_t k = 0; k < 4; ++k) {
      h = conv_out(h, 3, kResnetStrides[k], 1);
      w = conv_out(w, 3, kResnetStrides[k], 1);
      taps.push_back({spec.widths[k], h, w});
    }
  }
  return taps;
}

namespace layers {

Tensor he_normal(const Shape& shape, std::size_t fan_in, std::uint64_t seed, const std::string& name) {
  CounterStream rng(seed, stream_address({0x1417, name_hash(name)}));
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<float> values(numel(shape));
  for (auto& v : values) v = static_cast<float>(rng.normal() * scale);
  return Tensor::from(shape, std::move(values));
}

void add_conv_bn(ParamStore<float>& store, const std::string& prefix, std::size_t in, std::size_t out,
                 std::size_t k, std::uint64_t seed) {
  store.add(prefix + ".w", he_normal({out, in, k, k}, in * k * k, seed, prefix + ".w"));
  store.add(prefix + ".bn.gamma", Tensor::full({out}, 1.0f));
  store.add(prefix + ".bn.beta", Tensor::zeros({out}));
  store.add(prefix + ".bn.mean", Tensor::zeros({out}), false);
  store.add(prefix + ".bn.var", Tensor::full({out}, 1.0f), false);
}

}  // namespace layers

BlockModel<float> build_model(const ArchitectureSpec& spec, std::uint64_t seed) {
  const auto taps = tap_shapes(spec);
  ParamStore<float> p;
  using layers::he_normal;
  const std::size_t in_c = spec.input[0];
  if (spec.arch == Arch::lenet) {
    std::size_t prev = in_c;
    for (std::size_t k = 0; k < 2; ++k) {
      const auto pre = block_prefix(k) + ".conv";
      p.add(pre + ".w", he_normal({spec.widths[k], prev, 5, 5}, prev * 25, seed, pre + ".w"));
      p.add(pre + ".b", Tensor::zeros({spec.widths[k]}));
      prev = spec.widths[k];
    }
    const std::size_t flat = numel(taps.back());
    p.add("head.fc1.w", he_normal({flat, spec.hidden}, flat, seed, "head.fc1.w"));
    p.add("head.fc1.b", Tensor::zeros({spec.hidden}));
    p.add("head.fc2.w", he_normal({spec.hidden, spec.classes}, spec.hidden, seed, "head.fc2.w"));
    p.add("head.fc2.b", Tensor::zeros({spec.classes}));
  } else {
    layers::add_conv_bn(p, "b1.stem", in_c, spec.widths[0], 3, seed);
    std::size_t prev = spec.widths[0];
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t out = spec.widths[k];
      for (std::size_t u = 0; u < 2; ++u) {
        const auto pre = block_prefix(k) + ".u" + std::to_string(u + 1);
        const std::size_t in = u == 0 ? prev : out;
        const std::size_t stride = u == 0 ? kResnetStrides[k] : 1;
        layers::add_conv_bn(p, pre + ".c1", in, out, 3, seed);
        layers::add_conv_bn(p, pre + ".c2", out, out, 3, seed);
        if (stride != 1 || in != out) layers::add_conv_bn(p, pre + ".sc", in, out, 1, seed);
      }
      prev = out;
    }
    p.add("head.fc.w", he_normal({prev, spec.classes}, prev, seed, "head.fc.w"));
    p.add("head.fc.b", Tensor::zeros({spec.classes}));
  }
  return BlockModel<float>(spec, std::move(p));
}

template <class T>
BlockModel<T>::BlockModel(ArchitectureSpec spec, ParamStore<T> params)
    : spec_(std::move(spec)), taps_(nets::tap_shapes(spec_)), params_(std::move(params)) {}

template <class T>
BasicTensor<T> BlockModel<T>::run_block(Tape<T>& tape, std::size_t k, const BasicTensor<T>& x,
                                        const RunMode& mode) const {
  using layers::param;
  const auto pre = block_prefix(k);
  if (spec_.arch == Arch::lenet) {
    auto y = ops::conv2d(tape, x, param(params_, pre + ".conv.w", mode), param(params_, pre + ".conv.b", mode), 1, 0);
    return ops::maxpool2x2(tape, ops::relu(tape, y));
  }
  BasicTensor<T> h = x;
  if (k == 0) h = ops::relu(tape, layers::conv_bn(tape, params_, "b1.stem", h, 1, 1, mode));
  for (std::size_t u = 0; u < 2; ++u) {
    const auto unit = pre + ".u" + std::to_string(u + 1);
    const std::size_t stride = u == 0 ? kResnetStrides[k] : 1;
    auto y = ops::relu(tape, layers::conv_bn(tape, params_, unit + ".c1", h, stride, 1, mode));
    y = layers::conv_bn(tape, params_, unit + ".c2", y, 1, 1, mode);
    auto shortcut = params_.contains(unit + ".sc.w") ? layers::conv_bn(tape, params_, unit + ".sc", h, stride, 0, mode)
                                                     : h;
    h = ops::relu(tape, ops::add(tape, y, shortcut));
  }
  return h;
}

template <class T>
BasicTensor<T> BlockModel<T>::run_head(Tape<T>& tape, const BasicTensor<T>& x, const RunMode& mode) const {
  using layers::param;
  if (spec_.arch == Arch::lenet) {
    const std::size_t n = x.dim(0);
    auto flat = ops::reshape(tape, x, {n, x.size() / n});
    auto h = ops::relu(tape, ops::linear(tape, flat, param(params_, "head.fc1.w", mode), param(params_, "head.fc1.b", mode)));
    return ops::linear(tape, h, param(params_, "head.fc2.w", mode), param(params_, "head.fc2.b", mode));
  }
  return ops::linear(tape, ops::avgpool(tape, x), param(params_, "head.fc.w", mode), param(params_, "head.fc.b", mode));
}

template <class T>
typename BlockModel<T>::Output BlockModel<T>::forward_with_taps(Tape<T>& tape, const BasicTensor<T>& x,
                                                                const RunMode& mode,
                                                                const std::vector<BlockHook<T>>& hooks) const {
  if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != spec_.input)
    throw ShapeError("model expects input [N," + to_string(spec_.input).substr(1) + ", got " + to_string(x.shape()));
  if (!hooks.empty() && hooks.size() != num_blocks())
    throw std::invalid_argument("expected " + std::to_string(num_blocks()) + " hooks, got " + std::to_string(hooks.size()));
  Output out;
  BasicTensor<T> h = x;
  for (std::size_t k = 0; k < num_blocks(); ++k) {
    h = run_block(tape, k, h, mode);
    if (!hooks.empty() && hooks[k]) {
      auto hooked = hooks[k](tape, h);
      if (hooked.shape() != h.shape())
        throw ShapeError("hook at block " + std::to_string(k + 1) + " changed shape " + to_string(h.shape()) + " -> " +
                         to_string(hooked.shape()));
      h = hooked;
    }
    out.features.push_back(h);
  }
  out.logits = run_head(tape, h, mode);
  return out;
}

template class BlockModel<float>;
template class BlockModel<double>;

}  // namespace dfm::nets
