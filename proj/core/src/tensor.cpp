#include "dfm/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace dfm {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dims must be positive, got " + to_string(shape));
}
}  // namespace

template <class T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<Impl>();
  impl->data = std::make_shared<AlignedVector<T>>(numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return BasicTensor(std::move(impl));
}

template <class T>
BasicTensor<T> BasicTensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  check_shape(shape);
  if (numel(shape) != values.size())
    throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
                     " values");
  auto impl = std::make_shared<Impl>();
  impl->data = std::make_shared<AlignedVector<T>>(values.begin(), values.end());
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return BasicTensor(std::move(impl));
}

template <class T>
T BasicTensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() requires a single-element tensor, got " + to_string(shape()));
  return (*impl_->data)[0];
}

template <class T>
std::span<T> BasicTensor<T>::ensure_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(size(), T(0));
  return impl_->grad;
}

template <class T>
void BasicTensor<T>::zero_grad() const {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const {
  auto impl = std::make_shared<Impl>();
  impl->shape = impl_->shape;
  impl->data = std::make_shared<AlignedVector<T>>(*impl_->data);
  impl->grad = impl_->grad;
  impl->requires_grad = impl_->requires_grad;
  return BasicTensor(std::move(impl));
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
  auto impl = std::make_shared<Impl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return BasicTensor(std::move(impl));
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  check_shape(shape);
  if (numel(shape) != size())
    throw ShapeError("cannot reshape " + to_string(impl_->shape) + " to " + to_string(shape));
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  return BasicTensor(std::move(impl));
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace dfm
