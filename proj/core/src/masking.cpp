#include "dfm/masking.hpp"

#include <stdexcept>
#include <string>

namespace dfm::masking {

void check_ratio(double r, const char* what) {
  if (!(r >= 0.0 && r <= 1.0))
    throw std::invalid_argument(std::string(what) + " must lie in [0,1], got " + std::to_string(r));
}

Tensor sample_mask(const Shape& shape, double ratio, CounterStream stream) {
  check_ratio(ratio, "mask ratio");
  auto m = Tensor::zeros(shape);
  for (auto& v : m.data()) v = stream.uniform() < ratio ? 0.0f : 1.0f;
  return m;
}

CounterStream mask_stream(const MaskDraw& draw, std::uint64_t sample, std::uint32_t block, std::uint32_t branch) {
  return CounterStream(draw.seed, stream_address({draw.tag, sample, block, branch}));
}

template <class T>
BasicTensor<T> batch_masks(std::size_t n, const Shape& chw, double ratio, const MaskPolicy& policy,
                           std::uint32_t block, std::uint32_t branch) {
  check_ratio(ratio, "mask ratio");
  const std::size_t per = numel(chw);
  Shape shape{n};
  shape.insert(shape.end(), chw.begin(), chw.end());
  auto m = BasicTensor<T>::zeros(shape);
  auto out = m.data();
  for (std::size_t s = 0; s < n; ++s) {
    auto stream = mask_stream(policy.draw, policy.sample_offset + s, block, branch);
    for (std::size_t i = 0; i < per; ++i) out[s * per + i] = stream.uniform() < ratio ? T(0) : T(1);
  }
  return m;
}

DfmUnit<float> make_unit(std::uint32_t block, const Shape& chw, double r1, double r2, std::uint64_t seed,
                         bool zero_last) {
  check_ratio(r1, "r1");
  check_ratio(r2, "r2");
  if (chw.size() != 3) throw ShapeError("DFM unit shape must be [c,h,w], got " + to_string(chw));
  const std::size_t c = chw[0];
  const std::uint64_t unit_seed = mix64(seed ^ (0xD1F0ull << 32) ^ block);
  DfmUnit<float> unit{block, chw, r1, r2, {}};
  nets::layers::add_conv_bn(unit.phi, "l1", c, c, 1, unit_seed);
  nets::layers::add_conv_bn(unit.phi, "l2", c, c, 3, unit_seed);
  if (zero_last) {
    unit.phi.add("l3.w", Tensor::zeros({c, c, 1, 1}));
  } else {
    unit.phi.add("l3.w", nets::layers::he_normal({c, c, 1, 1}, c, unit_seed, "l3.w"));
  }
  unit.phi.add("l3.b", Tensor::zeros({c}));
  return unit;
}

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> decouple(Tape<T>& tape, const BasicTensor<T>& f, const DfmUnit<T>& unit,
                                                   const nets::RunMode& mode) {
  if (f.rank() != 4 || Shape(f.shape().begin() + 1, f.shape().end()) != unit.shape)
    throw ShapeError("DFM unit at block " + std::to_string(unit.block) + " expects [N," +
                     to_string(unit.shape).substr(1) + ", got " + to_string(f.shape()));
  using nets::layers::conv_bn;
  using nets::layers::param;
  auto h = ops::relu(tape, conv_bn(tape, unit.phi, "l1", f, 1, 0, mode));
  h = ops::relu(tape, conv_bn(tape, unit.phi, "l2", h, 1, 1, mode));
  auto c1 = ops::conv2d(tape, h, param(unit.phi, "l3.w", mode), param(unit.phi, "l3.b", mode), 1, 0);
  auto c2 = ops::sub(tape, f, c1);
  return {c1, c2};
}

template <class T>
BasicTensor<T> dfm_forward(Tape<T>& tape, const BasicTensor<T>& f, const DfmUnit<T>& unit, const nets::RunMode& mode,
                           const MaskPolicy& policy) {
  if (f.rank() != 4 || Shape(f.shape().begin() + 1, f.shape().end()) != unit.shape)
    throw ShapeError("DFM unit at block " + std::to_string(unit.block) + " expects [N," +
                     to_string(unit.shape).substr(1) + ", got " + to_string(f.shape()));
  if (policy.mode == MaskMode::disabled) return f;
  auto [c1, c2] = decouple(tape, f, unit, mode);
  const std::size_t n = f.dim(0);
  auto m1 = batch_masks<T>(n, unit.shape, unit.r1, policy, unit.block, 1);
  auto m2 = batch_masks<T>(n, unit.shape, unit.r2, policy, unit.block, 2);
  return fuse(tape, c1, c2, m1, m2);
}

template <class T>
BasicTensor<T> fuse(Tape<T>& tape, const BasicTensor<T>& c1, const BasicTensor<T>& c2, const BasicTensor<T>& m1,
                    const BasicTensor<T>& m2) {
  return ops::add(tape, ops::hadamard(tape, c1, m1), ops::hadamard(tape, c2, m2));
}

template <class T>
DefendedModel<T>::DefendedModel(nets::BlockModel<T> base, std::vector<std::optional<DfmUnit<T>>> units)
    : base_(std::move(base)), units_(std::move(units)) {
  if (units_.size() != base_.num_blocks())
    throw std::invalid_argument("unit list must have one slot per block");
  for (std::size_t k = 0; k < units_.size(); ++k)
    if (units_[k] && (units_[k]->block != k + 1 || units_[k]->shape != base_.tap_shapes()[k]))
      throw ShapeError("DFM unit in slot " + std::to_string(k + 1) + " does not match the block tap");
}

template <class T>
bool DefendedModel<T>::has_units() const {
  for (const auto& u : units_)
    if (u) return true;
  return false;
}

template <class T>
std::vector<std::uint32_t> DefendedModel<T>::unit_blocks() const {
  std::vector<std::uint32_t> ids;
  for (const auto& u : units_)
    if (u) ids.push_back(u->block);
  return ids;
}

template <class T>
typename nets::BlockModel<T>::Output DefendedModel<T>::forward_with_taps(Tape<T>& tape, const BasicTensor<T>& x,
                                                                         const nets::RunMode& mode,
                                                                         const MaskPolicy& policy) const {
  if (!has_units()) return base_.forward_with_taps(tape, x, mode);
  std::vector<nets::BlockHook<T>> hooks(units_.size());
  for (std::size_t k = 0; k < units_.size(); ++k) {
    if (!units_[k]) continue;
    const DfmUnit<T>* unit = &*units_[k];
    hooks[k] = [unit, &mode, &policy](Tape<T>& t, const BasicTensor<T>& f) {
      return dfm_forward(t, f, *unit, mode, policy);
    };
  }
  return base_.forward_with_taps(tape, x, mode, hooks);
}

template <class T>
std::vector<typename ParamStore<T>::Entry> DefendedModel<T>::named_tensors() const {
  std::vector<typename ParamStore<T>::Entry> out;
  for (const auto& e : base_.params().entries()) out.push_back({"theta." + e.name, e.tensor, e.trainable});
  for (const auto& u : units_) {
    if (!u) continue;
    for (const auto& e : u->phi.entries())
      out.push_back({"phi" + std::to_string(u->block) + "." + e.name, e.tensor, e.trainable});
  }
  return out;
}

DefendedModel<float> insert_dfm(DefendedModel<float> model, const std::set<std::uint32_t>& block_ids, double r1,
                                double r2, std::uint64_t seed) {
  const auto k_max = model.base().num_blocks();
  for (auto id : block_ids)
    if (id < 1 || id > k_max)
      throw std::out_of_range("DFM block id " + std::to_string(id) + " outside [1," + std::to_string(k_max) + "]");
  for (auto id : block_ids) model.units()[id - 1] = make_unit(id, model.base().tap_shapes()[id - 1], r1, r2, seed);
  return model;
}

DefendedModel<float> insert_dfm(const nets::BlockModel<float>& model, const std::set<std::uint32_t>& block_ids,
                                double r1, double r2, std::uint64_t seed) {
  return insert_dfm(DefendedModel<float>(model), block_ids, r1, r2, seed);
}

#define DFM_INSTANTIATE_MASKING(T)                                                                                  \
  template BasicTensor<T> batch_masks<T>(std::size_t, const Shape&, double, const MaskPolicy&, std::uint32_t,       \
                                         std::uint32_t);                                                            \
  template std::pair<BasicTensor<T>, BasicTensor<T>> decouple(Tape<T>&, const BasicTensor<T>&, const DfmUnit<T>&,  \
                                                              const nets::RunMode&);                                \
  template BasicTensor<T> dfm_forward(Tape<T>&, const BasicTensor<T>&, const DfmUnit<T>&, const nets::RunMode&,     \
                                      const MaskPolicy&);                                                           \
  template BasicTensor<T> fuse(Tape<T>&, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,       \
                               const BasicTensor<T>&);                                                              \
  template class DefendedModel<T>;

DFM_INSTANTIATE_MASKING(float)
DFM_INSTANTIATE_MASKING(double)

}  // namespace dfm::masking
