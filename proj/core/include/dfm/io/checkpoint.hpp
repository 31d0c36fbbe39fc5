#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dfm/masking.hpp"
#include "dfm/trainer.hpp"

/// DFMC checkpoint format (all integers and reals little-endian):
///
///   "DFMC" | u32 version | section(tensors) | section(optimizer) | section(cursor)
///   section := u32 count, then per record:
///              u32 name_len | name (UTF-8) | u32 rank | u32 dims[rank] | 4-byte words[prod(dims)]
///
/// Parameter and optimizer records carry IEEE-754 binary32 values. Cursor
/// records reuse the same layout with raw 32-bit words (64-bit integers and
/// binary64 values split low word first).
namespace dfm::io {

constexpr char kCheckpointMagic[4] = {'D', 'F', 'M', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct Record {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint32_t> words;
};

struct CheckpointFile {
  std::vector<Record> tensors;
  std::vector<Record> optimizer;
  std::vector<Record> cursor;
};

std::vector<unsigned char> encode(const CheckpointFile& file);
/// Throws FormatError on bad magic, unsupported version or truncation; no
/// partial result is returned.
CheckpointFile decode(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");

void write_file(const std::string& path, const CheckpointFile& file);
CheckpointFile read_file(const std::string& path);

Record to_record(const std::string& name, const Tensor& t);
Tensor to_tensor(const Record& r);

/// What is needed to rebuild the model around the stored tensors.
struct ModelMeta {
  nets::ArchitectureSpec arch;
  std::vector<std::uint32_t> blocks;
  double r1 = 0.01;
  double r2 = 0.1;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  masking::DefendedModel<float> model;
  train::TrainState state;
  ModelMeta meta;
};

void save_checkpoint(const std::string& path, const masking::DefendedModel<float>& model,
                     const train::TrainState& state, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dfm::io
