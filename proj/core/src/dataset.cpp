#include "dfm/dataset.hpp"

#include <algorithm>
#include <stdexcept>

namespace dfm {

void Dataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset is empty");
  if (!images.defined() || images.rank() != 4 || images.dim(0) != labels.size())
    throw std::invalid_argument("dataset images must be [N,C,H,W] with N matching the label count");
  for (auto y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw std::invalid_argument("label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
  for (float v : images.data())
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("pixel value outside [0,1]");
}

Tensor Dataset::gather(std::span<const std::size_t> rows) const {
  const std::size_t per = images.size() / images.dim(0);
  Shape shape = images.shape();
  shape[0] = rows.size();
  std::vector<float> out(rows.size() * per);
  auto src = images.data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per, out.begin() + static_cast<std::ptrdiff_t>(i * per));
  return Tensor::from(std::move(shape), std::move(out));
}

std::vector<std::int32_t> Dataset::gather_labels(std::span<const std::size_t> rows) const {
  std::vector<std::int32_t> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels.at(rows[i]);
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return Dataset{gather(rows), gather_labels(rows), split, classes};
}

}  // namespace dfm
