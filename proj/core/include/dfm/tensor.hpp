#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfm {

/// Thrown for any operand whose shape violates an operator's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);

/// 64-byte aligned storage. Vectorized kernels choose their peeling by
/// address, so a fixed alignment keeps float results independent of where
/// the allocator happened to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;
std::string to_string(const Shape& shape);

/// Dense row-major tensor handle.
///
/// Copies share storage (like a reference-counted array); use clone() for a
/// deep copy. detach() shares the value buffer but drops gradient tracking,
/// which is how frozen parameters enter a taped computation.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data->size(); }

  std::span<T> data() { return *impl_->data; }
  std::span<const T> data() const { return *impl_->data; }
  T& operator[](std::size_t i) { return (*impl_->data)[i]; }
  const T& operator[](std::size_t i) const { return (*impl_->data)[i]; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }
  /// Allocates a zero gradient buffer if none exists and returns it.
  /// Gradient buffers belong to the shared node, so these work on const handles.
  std::span<T> ensure_grad() const;
  void zero_grad() const;
  void drop_grad() const { impl_->grad.clear(); impl_->grad.shrink_to_fit(); }

  BasicTensor clone() const;
  BasicTensor detach() const;
  /// Same storage, different shape; numel must match.
  BasicTensor reshaped(Shape shape) const;

  /// Identity of the underlying node, used by the tape.
  const void* id() const { return impl_.get(); }
  bool same_storage(const BasicTensor& other) const { return impl_->data == other.impl_->data; }

  template <class U>
  BasicTensor<U> cast() const;

 private:
  struct Impl {
    Shape shape;
    std::shared_ptr<AlignedVector<T>> data;
    AlignedVector<T> grad;
    bool requires_grad = false;
  };
  explicit BasicTensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <class T>
template <class U>
BasicTensor<U> BasicTensor<T>::cast() const {
  std::vector<U> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>((*impl_->data)[i]);
  return BasicTensor<U>::from(shape(), std::move(out), requires_grad());
}

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace dfm
