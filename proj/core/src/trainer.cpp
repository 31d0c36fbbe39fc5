#include "dfm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "dfm/ops.hpp"
#include "dfm/random.hpp"

namespace dfm::train {

double lr_at(const LrSchedule& schedule, int epoch) {
  if (schedule.empty()) throw std::invalid_argument("empty learning-rate schedule");
  double rate = schedule.front().second;
  for (const auto& [from, r] : schedule)
    if (epoch >= from) rate = r;
  return rate;
}

LrSchedule step_decay(double base, int epochs) {
  return {{0, base}, {epochs / 2, base * 0.1}, {(3 * epochs) / 4, base * 0.01}};
}

void TrainPlan::validate() const {
  if (e1 < 0 || e2 < 0) throw std::invalid_argument("epoch counts must be >= 0");
  if (eps_warmup_epochs < 0) throw std::invalid_argument("warm-up epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  masking::check_ratio(r1, "r1");
  masking::check_ratio(r2, "r2");
  attack.validate();
}

std::string metrics_csv_header() { return "epoch,phase,clean_acc,robust_acc,mean_loss,wall_seconds"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%d,%.6g,%.6g,%.6g,%.6g", m.epoch, m.phase, m.clean_acc, m.robust_acc,
                m.mean_loss, m.wall_seconds);
  return buf;
}

void sgd_step(std::span<Tensor> params, std::span<Tensor> velocity, double lr, double momentum,
              double weight_decay) {
  if (params.size() != velocity.size()) throw ShapeError("sgd_step: parameter and velocity counts differ");
  const float lr_f = static_cast<float>(lr), mom = static_cast<float>(momentum), wd = static_cast<float>(weight_decay);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& v = velocity[k];
    if (p.shape() != v.shape())
      throw ShapeError("sgd_step: velocity " + to_string(v.shape()) + " does not match parameter " +
                       to_string(p.shape()));
    auto ps = p.data();
    auto vs = v.data();
    const bool has_grad = p.has_grad();
    auto gs = p.grad();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const float g = has_grad ? gs[i] : 0.0f;
      vs[i] = mom * vs[i] + g + wd * ps[i];
      ps[i] -= lr_f * vs[i];
    }
    p.zero_grad();
  }
}

ParamStore<float> zero_velocity(const masking::DefendedModel<float>& model) {
  ParamStore<float> v;
  for (const auto& e : model.named_tensors())
    if (e.trainable) v.add(e.name, Tensor::zeros(e.tensor.shape()), false);
  return v;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int phase, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterStream rng(seed, stream_address({0x5EED0, static_cast<std::uint64_t>(phase), static_cast<std::uint64_t>(epoch)}));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  return order;
}

namespace {

std::size_t count_correct(const Tensor& logits, std::span<const std::int32_t> labels) {
  const std::size_t m = logits.dim(1);
  std::size_t correct = 0;
  auto z = logits.data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = z.subspan(i * m, m);
    const auto best = static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels[i];
  }
  return correct;
}

void run_phase(masking::DefendedModel<float>& model, const Dataset& data, const TrainPlan& plan, TrainState& state,
               int phase, int epochs, const LrSchedule& lr, const EpochCallback& on_epoch, int stop_epoch) {
  plan.validate();
  data.validate();
  if (data.sample_shape() != model.base().spec().input)
    throw ShapeError("dataset samples " + to_string(data.sample_shape()) + " do not match model input " +
                     to_string(model.base().spec().input));
  if (data.classes != model.base().spec().classes)
    throw std::invalid_argument("dataset class count does not match the model head");

  std::vector<Tensor> params, velocity;
  for (const auto& e : model.named_tensors()) {
    if (!e.trainable) continue;
    if (plan.freeze_phi && e.name.rfind("phi", 0) == 0) continue;
    params.push_back(e.tensor);
    velocity.push_back(state.velocity.get(e.name));
  }
  const auto stochastic = masking::MaskMode::stochastic;
  const std::size_t n = plan.batch_size;
  const std::size_t batches = data.size() / n;
  if (batches == 0) throw std::invalid_argument("dataset smaller than one batch");

  while (state.epoch < epochs && (stop_epoch < 0 || state.epoch < stop_epoch)) {
    const int epoch = state.epoch;
    const auto start = std::chrono::steady_clock::now();
    const auto order = epoch_order(data.size(), plan.seed, phase, epoch);
    const double rate = lr_at(lr, epoch);
    double loss_sum = 0;
    std::size_t clean_ok = 0, robust_ok = 0, seen = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> rows(order.data() + b * n, n);
      const auto x = data.gather(rows);
      const auto y = data.gather_labels(rows);
      masking::MaskCursor cursor(plan.seed, phase == 1 ? masking::Phase::phase1 : masking::Phase::phase2,
                                 static_cast<std::uint64_t>(epoch), b);
      const attacks::AttackRng rng{plan.seed,
                                   stream_address({0xA77ACC, static_cast<std::uint64_t>(phase),
                                                   static_cast<std::uint64_t>(epoch), b}),
                                   0};
      auto attack = plan.attack;
      if (phase == 1 && plan.eps_warmup_epochs > 0) {
        const double ramp = static_cast<double>(epoch * batches + b + 1) /
                            static_cast<double>(static_cast<std::size_t>(plan.eps_warmup_epochs) * batches);
        if (ramp < 1) {
          attack.epsilon *= ramp;
          attack.step_size *= ramp;
        }
      }
      // Craft in eval mode with frozen parameters, then train on the result.
      const auto where = "phase " + std::to_string(phase) + ", epoch " + std::to_string(epoch + 1) + ", batch " +
                         std::to_string(b);
      Tensor x_adv;
      try {
        x_adv = attacks::run_attack(attacks::frozen_logits(model, cursor, stochastic), x, y, attack, rng);
      } catch (const attacks::NonFiniteGradient& e) {
        throw TrainingDiverged(std::string("adversarial crafting failed in ") + where + ": " + e.what());
      }
      {
        Tape<float> clean_tape(Tape<float>::Recording::off);
        clean_ok += count_correct(
            model.forward(clean_tape, x, nets::RunMode{false, false}, masking::MaskPolicy{stochastic, cursor.next(), 0}),
            y);
      }
      Tape<float> tape;
      const auto logits =
          model.forward(tape, x_adv, nets::RunMode{true, true}, masking::MaskPolicy{stochastic, cursor.next(), 0});
      const auto loss = ops::softmax_cross_entropy(tape, logits, y);
      if (!std::isfinite(loss.item()))
        throw TrainingDiverged("non-finite loss in " + where);
      tape.backward(loss);
      sgd_step(params, velocity, rate, plan.momentum, plan.weight_decay);
      robust_ok += count_correct(logits, y);
      loss_sum += loss.item();
      seen += n;
      ++state.step;
    }
    ++state.epoch;
    EpochMetrics m;
    m.phase = phase;
    m.epoch = state.epoch;
    m.clean_acc = 100.0 * static_cast<double>(clean_ok) / static_cast<double>(seen);
    m.robust_acc = 100.0 * static_cast<double>(robust_ok) / static_cast<double>(seen);
    m.mean_loss = loss_sum / static_cast<double>(batches);
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.log.push_back(m);
    if (on_epoch) on_epoch(m, state);
  }
}

}  // namespace

void train_phase1(masking::DefendedModel<float>& model, const Dataset& data, const TrainPlan& plan, TrainState& state,
                  const EpochCallback& on_epoch, int stop_epoch) {
  if (model.has_units()) throw std::invalid_argument("phase 1 trains the un-augmented backbone");
  if (state.phase != 1) throw std::invalid_argument("train state is not in phase 1");
  if (state.velocity.size() == 0) state.velocity = zero_velocity(model);
  run_phase(model, data, plan, state, 1, plan.e1, plan.lr1, on_epoch, stop_epoch);
}

void train_phase2(masking::DefendedModel<float>& model, const Dataset& data, const TrainPlan& plan, TrainState& state,
                  const EpochCallback& on_epoch, int stop_epoch) {
  if (state.phase == 1) {
    if (!model.has_units()) model = masking::insert_dfm(model, plan.blocks, plan.r1, plan.r2, plan.seed);
    state.phase = 2;
    state.epoch = 0;
    state.velocity = zero_velocity(model);
  }
  if (state.velocity.size() == 0) state.velocity = zero_velocity(model);
  run_phase(model, data, plan, state, 2, plan.e2, plan.lr2, on_epoch, stop_epoch);
}

}  // namespace dfm::train
