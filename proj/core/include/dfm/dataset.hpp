#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dfm/tensor.hpp"

namespace dfm {

enum class Split { train, test };

/// Labelled images in [0,1], stored as one [N,C,H,W] tensor.
struct Dataset {
  Tensor images;
  std::vector<std::int32_t> labels;
  Split split = Split::train;
  std::size_t classes = 10;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }

  /// Throws std::invalid_argument when labels/values/sizes break the invariants.
  void validate() const;

  /// Gathers the given rows into a new batch tensor.
  Tensor gather(std::span<const std::size_t> rows) const;
  std::vector<std::int32_t> gather_labels(std::span<const std::size_t> rows) const;

  /// First n samples (or all if n == 0 or n >= size()).
  Dataset head(std::size_t n) const;
};

}  // namespace dfm
