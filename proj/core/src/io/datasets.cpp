#include "dfm/io/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

namespace dfm::io {

namespace {

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path) {
  if (offset + 4 > buf.size())
    throw FormatError(path + ": truncated header at offset " + std::to_string(offset));
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

unsigned char to_byte(float v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

}  // namespace

Dataset read_idx_pair(const std::string& images_path, const std::string& labels_path, Split split) {
  const auto img = slurp(images_path);
  const auto lab = slurp(labels_path);
  const auto img_magic = read_be32(img, 0, images_path);
  if (img_magic != kIdxImageMagic)
    throw FormatError(images_path + ": bad magic " + std::to_string(img_magic) + " at offset 0 (expected 2051)");
  const auto lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabelMagic)
    throw FormatError(labels_path + ": bad magic " + std::to_string(lab_magic) + " at offset 0 (expected 2049)");
  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t n_labels = read_be32(lab, 4, labels_path);
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(images_path + ": empty image set in header at offset 4");
  if (n_labels != n)
    throw FormatError(labels_path + ": label count " + std::to_string(n_labels) + " at offset 4 differs from " +
                      std::to_string(n) + " images");
  const std::size_t need = 16 + n * rows * cols;
  if (img.size() < need)
    throw FormatError(images_path + ": truncated at offset " + std::to_string(img.size()) + " (expected " +
                      std::to_string(need) + " bytes)");
  if (lab.size() < 8 + n)
    throw FormatError(labels_path + ": truncated at offset " + std::to_string(lab.size()) + " (expected " +
                      std::to_string(8 + n) + " bytes)");
  Dataset d;
  d.split = split;
  d.classes = 10;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[8 + i] > 9)
      throw FormatError(labels_path + ": label " + std::to_string(lab[8 + i]) + " at offset " + std::to_string(8 + i) +
                        " outside [0,9]");
    d.labels[i] = lab[8 + i];
  }
  std::vector<float> px(n * rows * cols);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(img[16 + i]) / 255.0f;
  d.images = Tensor::from({n, 1, rows, cols}, std::move(px));
  return d;
}

std::pair<Dataset, Dataset> load_mnist(const std::string& dir) {
  const std::filesystem::path p(dir);
  return {read_idx_pair((p / "train-images-idx3-ubyte").string(), (p / "train-labels-idx1-ubyte").string(), Split::train),
          read_idx_pair((p / "t10k-images-idx3-ubyte").string(), (p / "t10k-labels-idx1-ubyte").string(), Split::test)};
}

std::size_t cifar_record_count(std::uintmax_t bytes) {
  if (bytes == 0 || bytes % kCifarRecordBytes != 0)
    throw FormatError("CIFAR-10 batch size " + std::to_string(bytes) + " is not a positive multiple of 3073");
  return static_cast<std::size_t>(bytes / kCifarRecordBytes);
}

Dataset read_cifar_batches(const std::vector<std::string>& paths, Split split) {
  std::vector<float> px;
  std::vector<std::int32_t> labels;
  for (const auto& path : paths) {
    const auto buf = slurp(path);
    std::size_t records = 0;
    try {
      records = cifar_record_count(buf.size());
    } catch (const FormatError& e) {
      throw FormatError(path + ": " + e.what());
    }
    for (std::size_t r = 0; r < records; ++r) {
      const std::size_t off = r * kCifarRecordBytes;
      if (buf[off] > 9)
        throw FormatError(path + ": label " + std::to_string(buf[off]) + " at offset " + std::to_string(off) +
                          " outside [0,9]");
      labels.push_back(buf[off]);
      for (std::size_t i = 1; i < kCifarRecordBytes; ++i) px.push_back(static_cast<float>(buf[off + i]) / 255.0f);
    }
  }
  if (labels.empty()) throw FormatError("no CIFAR-10 records read");
  Dataset d;
  d.split = split;
  d.classes = 10;
  const std::size_t n = labels.size();
  d.labels = std::move(labels);
  d.images = Tensor::from({n, 3, 32, 32}, std::move(px));
  return d;
}

std::pair<Dataset, Dataset> load_cifar10(const std::string& dir) {
  const std::filesystem::path p(dir);
  std::vector<std::string> train;
  for (int i = 1; i <= 5; ++i) train.push_back((p / ("data_batch_" + std::to_string(i) + ".bin")).string());
  return {read_cifar_batches(train, Split::train), read_cifar_batches({(p / "test_batch.bin").string()}, Split::test)};
}

void write_idx_images(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  put_be32(out, static_cast<std::uint32_t>(data.images.dim(2)));
  put_be32(out, static_cast<std::uint32_t>(data.images.dim(3)));
  for (float v : data.images.data()) out.put(static_cast<char>(to_byte(v)));
}

void write_idx_labels(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  for (auto y : data.labels) out.put(static_cast<char>(y));
}

void write_cifar_batch(const std::string& path, const Dataset& data) {
  if (data.sample_shape() != Shape{3, 32, 32}) throw std::invalid_argument("CIFAR-10 records are 3x32x32");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const auto px = data.images.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.put(static_cast<char>(data.labels[i]));
    for (std::size_t j = 0; j < 3072; ++j) out.put(static_cast<char>(to_byte(px[i * 3072 + j])));
  }
}

}  // namespace dfm::io
