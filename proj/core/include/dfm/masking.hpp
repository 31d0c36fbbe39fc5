#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "dfm/nets.hpp"
#include "dfm/random.hpp"

/// Decoupled visual feature masking.
///
/// A unit at block k splits the block output f into a learned part
/// c1 = phi(f) and the residual c2 = f - c1, drops entries of each with
/// independent Bernoulli masks of ratio r1 / r2, and fuses
/// f_hat = c1 * M1 + c2 * M2. Surviving entries are not rescaled.
namespace dfm::masking {

/// Identifies one stochastic forward pass. Masks for sample s at block k are
/// drawn from the Philox stream addressed by (tag, s, k, branch), so they do
/// not depend on evaluation order or batching.
struct MaskDraw {
  std::uint64_t seed = 0;
  std::uint64_t tag = 0;
};

enum class Phase : std::uint64_t { init = 0, phase1 = 1, phase2 = 2, eval = 3, attack = 4, diag = 5 };

/// Hands out a fresh MaskDraw per forward pass within one minibatch.
class MaskCursor {
 public:
  MaskCursor(std::uint64_t seed, Phase phase, std::uint64_t epoch, std::uint64_t batch)
      : seed_(seed), phase_(static_cast<std::uint64_t>(phase)), epoch_(epoch), batch_(batch) {}

  MaskDraw next() { return MaskDraw{seed_, stream_address({phase_, epoch_, batch_, pass_++})}; }
  std::uint64_t passes() const { return pass_; }

 private:
  std::uint64_t seed_, phase_, epoch_, batch_;
  std::uint64_t pass_ = 0;
};

enum class MaskMode { stochastic, disabled };

struct MaskPolicy {
  MaskMode mode = MaskMode::stochastic;
  MaskDraw draw;
  /// Global index of the first sample in the batch.
  std::uint64_t sample_offset = 0;
};

/// Binary mask of the given shape; each entry is 0 with probability ratio.
/// Throws std::invalid_argument when ratio is outside [0,1].
Tensor sample_mask(const Shape& shape, double ratio, CounterStream stream);

/// Stream for one (draw, sample, block, branch) coordinate.
CounterStream mask_stream(const MaskDraw& draw, std::uint64_t sample, std::uint32_t block, std::uint32_t branch);

/// Per-sample masks for a batch of n samples, stacked to [n, c, h, w].
template <class T>
BasicTensor<T> batch_masks(std::size_t n, const Shape& chw, double ratio, const MaskPolicy& policy,
                           std::uint32_t block, std::uint32_t branch);

template <class T>
struct DfmUnit {
  std::uint32_t block = 0;  // 1-based block index
  Shape shape;              // [c,h,w]
  double r1 = 0.01;
  double r2 = 0.1;
  ParamStore<T> phi;        // Feature Decoupled Net

  template <class U = T>
  DfmUnit<U> cast() const {
    return DfmUnit<U>{block, shape, r1, r2, phi.template cast<U>()};
  }
};

/// conv1x1 -> bn -> relu -> conv3x3(pad 1) -> bn -> relu -> conv1x1, all
/// channel-preserving. zero_last zeroes the final conv (then phi(f) = 0).
DfmUnit<float> make_unit(std::uint32_t block, const Shape& chw, double r1, double r2, std::uint64_t seed,
                         bool zero_last = false);

void check_ratio(double r, const char* what);

/// c1 = phi(f), c2 = f - c1.
template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> decouple(Tape<T>& tape, const BasicTensor<T>& f, const DfmUnit<T>& unit,
                                                   const nets::RunMode& mode);

/// c1 * m1 + c2 * m2.
template <class T>
BasicTensor<T> fuse(Tape<T>& tape, const BasicTensor<T>& c1, const BasicTensor<T>& c2, const BasicTensor<T>& m1,
                    const BasicTensor<T>& m2);

/// f_hat = c1 * M1 + c2 * M2 in stochastic mode; f itself when disabled.
template <class T>
BasicTensor<T> dfm_forward(Tape<T>& tape, const BasicTensor<T>& f, const DfmUnit<T>& unit, const nets::RunMode& mode,
                           const MaskPolicy& policy);

/// Backbone plus optional DFM units at block boundaries. Copies share
/// parameter storage; use cast() for an independent copy.
template <class T>
class DefendedModel {
 public:
  explicit DefendedModel(nets::BlockModel<T> base) : base_(std::move(base)), units_(base_.num_blocks()) {}
  DefendedModel(nets::BlockModel<T> base, std::vector<std::optional<DfmUnit<T>>> units);

  nets::BlockModel<T>& base() { return base_; }
  const nets::BlockModel<T>& base() const { return base_; }
  const std::vector<std::optional<DfmUnit<T>>>& units() const { return units_; }
  std::vector<std::optional<DfmUnit<T>>>& units() { return units_; }
  bool has_units() const;
  /// Sorted 1-based block ids that carry a unit.
  std::vector<std::uint32_t> unit_blocks() const;

  typename nets::BlockModel<T>::Output forward_with_taps(Tape<T>& tape, const BasicTensor<T>& x,
                                                         const nets::RunMode& mode, const MaskPolicy& policy) const;
  BasicTensor<T> forward(Tape<T>& tape, const BasicTensor<T>& x, const nets::RunMode& mode,
                         const MaskPolicy& policy) const {
    return forward_with_taps(tape, x, mode, policy).logits;
  }

  /// theta followed by every phi_i, each entry prefixed "theta." / "phi<k>.".
  std::vector<typename ParamStore<T>::Entry> named_tensors() const;

  template <class U = T>
  DefendedModel<U> cast() const {
    std::vector<std::optional<DfmUnit<U>>> units(units_.size());
    for (std::size_t k = 0; k < units_.size(); ++k)
      if (units_[k]) units[k] = units_[k]->template cast<U>();
    return DefendedModel<U>(base_.template cast<U>(), std::move(units));
  }

 private:
  nets::BlockModel<T> base_;
  std::vector<std::optional<DfmUnit<T>>> units_;
};

/// Installs independent units (own phi, own stream) at the given 1-based blocks.
/// Existing units at other blocks are kept. Throws on block ids outside [1,K].
DefendedModel<float> insert_dfm(DefendedModel<float> model, const std::set<std::uint32_t>& block_ids, double r1,
                                double r2, std::uint64_t seed);
DefendedModel<float> insert_dfm(const nets::BlockModel<float>& model, const std::set<std::uint32_t>& block_ids,
                                double r1, double r2, std::uint64_t seed);

extern template class DefendedModel<float>;
extern template class DefendedModel<double>;

}  // namespace dfm::masking
