#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>

#include "dfm/attacks.hpp"
#include "dfm/nets.hpp"
#include "dfm/trainer.hpp"

namespace dfm::io {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat key=value run description. Blank lines and lines starting with '#'
/// are ignored; whitespace around keys and values is trimmed.
///
/// Dataset-dependent defaults (when the key is absent):
///   mnist:   arch lenet, blocks 1,2, attack pgd linf eps 0.3 step 0.1 x7,
///            lr 0.05, warmup_epochs 3
///   cifar10: arch resnet-small, blocks 1,2,4, attack pgd linf eps 8/255 step 2/255 x10,
///            lr 0.1, warmup_epochs 0
struct RunConfig {
  std::string dataset = "mnist";  // mnist | cifar10
  std::string data_dir;
  nets::Arch arch = nets::Arch::lenet;
  std::uint64_t seed = 0;
  int e1 = 10;
  int e2 = 10;
  std::size_t batch_size = 100;
  double lr = 0.05;  // phase-1 base rate; phase 2 runs at lr / 10
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double r1 = 0.01;
  double r2 = 0.1;
  std::set<std::uint32_t> blocks = {1, 2};
  attacks::AttackConfig attack = attacks::mnist_training_attack();
  /// Phase-1 epochs over which the training epsilon ramps up from 0.
  int warmup_epochs = 3;
  int eval_trials = 5;
  std::string out_dir = "out";
  /// Use only the first n samples of each split; 0 keeps everything.
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;

  train::TrainPlan to_plan() const;
  nets::ArchitectureSpec architecture() const;
};

/// Throws ConfigError naming the line for unknown keys, duplicate keys,
/// malformed lines and unparsable values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace dfm::io
