#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dfm/attacks.hpp"
#include "dfm/dataset.hpp"
#include "dfm/masking.hpp"

namespace dfm::train {

/// Piecewise-constant learning rate: each (epoch, rate) applies from that
/// 0-based epoch onward.
using LrSchedule = std::vector<std::pair<int, double>>;

double lr_at(const LrSchedule& schedule, int epoch);
/// base, then x0.1 at 50% and x0.01 at 75% of the epochs.
LrSchedule step_decay(double base, int epochs);

struct TrainPlan {
  int e1 = 10;
  int e2 = 10;
  std::size_t batch_size = 100;
  LrSchedule lr1 = step_decay(0.1, 10);
  LrSchedule lr2 = {{0, 0.01}};
  double momentum = 0.9;
  double weight_decay = 5e-4;
  attacks::AttackConfig attack = attacks::mnist_training_attack();
  std::set<std::uint32_t> blocks = {1, 2};
  double r1 = 0.01;
  double r2 = 0.1;
  std::uint64_t seed = 0;
  /// Phase 1 ramps epsilon (and step) linearly from 0 over this many epochs.
  int eps_warmup_epochs = 0;
  /// Keeps phi fixed during phase 2 (used to compare against phase 1).
  bool freeze_phi = false;

  void validate() const;
};

struct EpochMetrics {
  int phase = 1;
  int epoch = 0;  // 1-based within the phase
  double clean_acc = 0;
  double robust_acc = 0;
  double mean_loss = 0;
  double wall_seconds = 0;
};

std::string metrics_csv_header();
/// Reals use 6 significant digits.
std::string metrics_csv_row(const EpochMetrics& m);

/// Everything needed to resume at an epoch boundary. All randomness is
/// addressed by (seed, phase, epoch, batch, pass), so the cursor is just
/// the phase/epoch/step position.
struct TrainState {
  int phase = 1;
  int epoch = 0;  // epochs completed in the current phase
  std::int64_t step = 0;
  ParamStore<float> velocity;  // keyed like DefendedModel::named_tensors()
  std::vector<EpochMetrics> log;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// v = momentum * v + grad + weight_decay * p; p -= lr * v; grad zeroed.
void sgd_step(std::span<Tensor> params, std::span<Tensor> velocity, double lr, double momentum,
              double weight_decay);

/// Zero velocities for every trainable tensor of the model.
ParamStore<float> zero_velocity(const masking::DefendedModel<float>& model);

using EpochCallback = std::function<void(const EpochMetrics&, const TrainState&)>;

/// Standard adversarial training of theta on adversarial batches only.
/// Runs until plan.e1 epochs are done, or until state.epoch == stop_epoch
/// when stop_epoch >= 0.
void train_phase1(masking::DefendedModel<float>& model, const Dataset& data, const TrainPlan& plan, TrainState& state,
                  const EpochCallback& on_epoch = {}, int stop_epoch = -1);

/// Inserts DFM units at plan.blocks if the model has none, resets the
/// optimizer, then jointly trains theta and phi on adversarial batches
/// crafted against the stochastic model.
void train_phase2(masking::DefendedModel<float>& model, const Dataset& data, const TrainPlan& plan, TrainState& state,
                  const EpochCallback& on_epoch = {}, int stop_epoch = -1);

/// Deterministic permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int phase, int epoch);

}  // namespace dfm::train
