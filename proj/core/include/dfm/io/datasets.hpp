#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

#include "dfm/dataset.hpp"

namespace dfm::io {

/// Malformed or truncated input file. what() names the file and byte offset.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // 2051
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;  // 2049
constexpr std::size_t kCifarRecordBytes = 3073;       // label + 3x32x32

/// Reads one IDX image/label file pair into a [N,1,rows,cols] dataset.
Dataset read_idx_pair(const std::string& images_path, const std::string& labels_path, Split split);

/// train-{images-idx3,labels-idx1}-ubyte and t10k-* from dir.
std::pair<Dataset, Dataset> load_mnist(const std::string& dir);

/// Records in a CIFAR-10 binary batch of the given byte size; throws if the
/// size is not a multiple of 3073.
std::size_t cifar_record_count(std::uintmax_t bytes);

Dataset read_cifar_batches(const std::vector<std::string>& paths, Split split);

/// data_batch_1..5.bin and test_batch.bin from dir.
std::pair<Dataset, Dataset> load_cifar10(const std::string& dir);

/// Writers used to produce fixtures in the same formats.
void write_idx_images(const std::string& path, const Dataset& data);
void write_idx_labels(const std::string& path, const Dataset& data);
void write_cifar_batch(const std::string& path, const Dataset& data);

}  // namespace dfm::io
