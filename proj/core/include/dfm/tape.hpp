#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "dfm/tensor.hpp"

namespace dfm {

/// Ordered record of differentiable operations.
///
/// Operators append a node only when one of their operands requires a
/// gradient; nodes are therefore in topological order by construction.
/// backward() may run once per tape: a second call is rejected, since the
/// intermediate gradients it would start from have already been consumed.
template <class T>
class Tape {
 public:
  struct Node {
    std::vector<BasicTensor<T>> operands;
    BasicTensor<T> output;
    std::function<void()> backward;
  };

  enum class Recording { on, off };

  Tape() = default;
  explicit Tape(Recording r) : recording_(r == Recording::on) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  /// True when an op over these operands must be recorded.
  bool tracks(std::initializer_list<const BasicTensor<T>*> operands) const {
    if (!recording_) return false;
    for (auto* t : operands)
      if (t && t->defined() && t->requires_grad()) return true;
    return false;
  }

  void record(std::vector<BasicTensor<T>> operands, BasicTensor<T> output, std::function<void()> backward) {
    output.set_requires_grad(true);
    nodes_.push_back(Node{std::move(operands), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
  /// Leaf gradients accumulate into existing buffers; zero them between steps.
  void backward(BasicTensor<T> loss);

 private:
  std::vector<Node> nodes_;
  bool recording_ = true;
  bool consumed_ = false;
};

template <class T>
void Tape<T>::backward(BasicTensor<T> loss) {
  if (consumed_) throw std::logic_error("backward already ran on this tape; re-run the forward pass");
  if (loss.size() != 1) throw ShapeError("backward requires a scalar loss, got " + to_string(loss.shape()));
  if (!loss.requires_grad()) throw std::logic_error("loss does not depend on any tracked tensor");
  consumed_ = true;
  loss.ensure_grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not on a path to the loss
    it->backward();
  }
  // Release intermediate buffers; leaves keep theirs.
  for (auto& node : nodes_) node.output.drop_grad();
}

}  // namespace dfm
