#pragma once

// Learnable stand-in data: each class owns a random prototype image and
// samples are the prototype blended with per-sample uniform noise.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfm/dataset.hpp"
#include "dfm/io/datasets.hpp"
#include "dfm/random.hpp"

namespace synthetic {

inline dfm::Dataset make_dataset(std::size_t n, const dfm::Shape& chw, std::uint64_t seed,
                                 dfm::Split split = dfm::Split::train, std::size_t classes = 10,
                                 double noise = 0.35) {
  const std::size_t per = dfm::numel(chw);
  std::vector<float> protos(classes * per);
  dfm::CounterStream proto_rng(seed, 0xC1A55);
  for (auto& v : protos) v = static_cast<float>(proto_rng.uniform());

  dfm::Dataset d;
  d.split = split;
  d.classes = classes;
  d.labels.resize(n);
  std::vector<float> px(n * per);
  dfm::CounterStream rng(seed, split == dfm::Split::train ? 0x7A1 : 0x7E5);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(rng.uniform() * static_cast<double>(classes)) % classes;
    d.labels[i] = static_cast<std::int32_t>(y);
    for (std::size_t j = 0; j < per; ++j)
      px[i * per + j] = static_cast<float>((1 - noise) * protos[y * per + j] + noise * rng.uniform());
  }
  dfm::Shape shape{n};
  shape.insert(shape.end(), chw.begin(), chw.end());
  d.images = dfm::Tensor::from(shape, std::move(px));
  return d;
}

// MNIST-layout IDX files (train-* and t10k-*) in dir.
inline void write_mnist_dir(const std::filesystem::path& dir, std::size_t n_train, std::size_t n_test,
                            std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto train = make_dataset(n_train, {1, 28, 28}, seed, dfm::Split::train);
  const auto test = make_dataset(n_test, {1, 28, 28}, seed, dfm::Split::test);
  dfm::io::write_idx_images((dir / "train-images-idx3-ubyte").string(), train);
  dfm::io::write_idx_labels((dir / "train-labels-idx1-ubyte").string(), train);
  dfm::io::write_idx_images((dir / "t10k-images-idx3-ubyte").string(), test);
  dfm::io::write_idx_labels((dir / "t10k-labels-idx1-ubyte").string(), test);
}

// CIFAR-10 binary layout: training samples spread over data_batch_1..5.bin.
inline void write_cifar_dir(const std::filesystem::path& dir, std::size_t n_train, std::size_t n_test,
                            std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto train = make_dataset(n_train, {3, 32, 32}, seed, dfm::Split::train);
  const std::size_t per = (n_train + 4) / 5;
  for (std::size_t b = 0; b < 5; ++b) {
    const std::size_t lo = std::min(n_train, b * per), hi = std::min(n_train, lo + per);
    std::vector<std::size_t> rows;
    for (std::size_t i = lo; i < hi; ++i) rows.push_back(i);
    dfm::Dataset part;
    part.images = train.gather(rows);
    part.labels = train.gather_labels(rows);
    dfm::io::write_cifar_batch((dir / ("data_batch_" + std::to_string(b + 1) + ".bin")).string(), part);
  }
  dfm::io::write_cifar_batch((dir / "test_batch.bin").string(),
                             make_dataset(n_test, {3, 32, 32}, seed, dfm::Split::test));
}

}  // namespace synthetic
