#include <benchmark/benchmark.h>

#include "dfm/attacks.hpp"
#include "dfm/masking.hpp"
#include "dfm/ops.hpp"
#include "dfm/random.hpp"

using namespace dfm;

namespace {

Tensor uniform(const Shape& shape, std::uint64_t seed, bool grad = false) {
  CounterStream s(seed, 0xBE7C);
  std::vector<float> v(numel(shape));
  for (auto& x : v) x = static_cast<float>(s.uniform());
  return Tensor::from(shape, std::move(v), grad);
}

std::vector<std::int32_t> labels(std::size_t n) {
  std::vector<std::int32_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<std::int32_t>(i % 10);
  return y;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = uniform({32, c, 16, 16}, 1);
  const auto w = uniform({c, c, 3, 3}, 2);
  const auto b = uniform({c}, 3);
  for (auto _ : state) {
    Tape<float> tape(Tape<float>::Recording::off);
    benchmark::DoNotOptimize(ops::conv2d(tape, x, w, b, 1, 1));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(64);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = uniform({32, c, 16, 16}, 1, true);
  const auto w = uniform({c, c, 3, 3}, 2, true);
  const auto b = uniform({c}, 3, true);
  for (auto _ : state) {
    Tape<float> tape;
    tape.backward(ops::sum(tape, ops::conv2d(tape, x, w, b, 1, 1)));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(64);

void BM_Linear(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto x = uniform({100, d}, 1);
  const auto w = uniform({d, d}, 2);
  const auto b = uniform({d}, 3);
  for (auto _ : state) {
    Tape<float> tape(Tape<float>::Recording::off);
    benchmark::DoNotOptimize(ops::linear(tape, x, w, b));
  }
}
BENCHMARK(BM_Linear)->Arg(256)->Arg(1024);

void BM_ModelTrainStep(benchmark::State& state) {
  const bool resnet = state.range(0) == 1;
  const bool with_dfm = state.range(1) == 1;
  const auto spec = resnet ? nets::resnet_small() : nets::lenet();
  masking::DefendedModel<float> model(nets::build_model(spec, 1));
  if (with_dfm) model = masking::insert_dfm(model, resnet ? std::set<std::uint32_t>{1, 2, 4} : std::set<std::uint32_t>{1, 2}, 0.01, 0.1, 1);
  const std::size_t n = resnet ? 16 : 100;
  Shape in{n};
  in.insert(in.end(), spec.input.begin(), spec.input.end());
  const auto x = uniform(in, 4);
  const auto y = labels(n);
  std::uint64_t pass = 0;
  for (auto _ : state) {
    Tape<float> tape;
    const masking::MaskPolicy policy{masking::MaskMode::stochastic, {1, pass++}, 0};
    tape.backward(ops::softmax_cross_entropy(tape, model.forward(tape, x, nets::RunMode{true, true}, policy), y));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ModelTrainStep)->ArgsProduct({{0, 1}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_Pgd7LeNet(benchmark::State& state) {
  const auto model = masking::insert_dfm(nets::build_model(nets::lenet(), 1), {1, 2}, 0.01, 0.1, 1);
  const auto x = uniform({100, 1, 28, 28}, 5);
  const auto y = labels(100);
  for (auto _ : state) {
    masking::MaskCursor cursor(1, masking::Phase::attack, 0, 0);
    benchmark::DoNotOptimize(
        attacks::pgd(attacks::frozen_logits(model, cursor, masking::MaskMode::stochastic), x, y,
                     attacks::mnist_training_attack(), {1}));
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_Pgd7LeNet)->Unit(benchmark::kMillisecond);

void BM_MaskSampling(benchmark::State& state) {
  std::uint64_t tag = 0;
  for (auto _ : state) {
    const masking::MaskPolicy policy{masking::MaskMode::stochastic, {7, tag++}, 0};
    benchmark::DoNotOptimize(masking::batch_masks<float>(100, {16, 4, 4}, 0.1, policy, 2, 1));
  }
  state.SetItemsProcessed(state.iterations() * 100 * 256);
}
BENCHMARK(BM_MaskSampling);

}  // namespace

BENCHMARK_MAIN();
