#include <gtest/gtest.h>

#include <cmath>

#include "dfm/attacks.hpp"
#include "dfm/ops.hpp"
#include "oracles.hpp"

using namespace dfm;
using namespace dfm::attacks;
using masking::MaskCursor;
using masking::MaskMode;
using masking::Phase;

namespace {

std::vector<std::int32_t> labels_for(std::size_t n) {
  std::vector<std::int32_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<std::int32_t>(i % 10);
  return y;
}

masking::DefendedModel<float> defended_lenet(std::uint64_t seed) {
  return masking::insert_dfm(nets::build_model(nets::lenet(), seed), {1, 2}, 0.1, 0.3, seed + 1);
}

void expect_contained(const Tensor& adv, const Tensor& x, Norm norm, double eps) {
  ASSERT_EQ(adv.shape(), x.shape());
  const std::size_t per = x.size() / x.dim(0);
  for (std::size_t s = 0; s < x.dim(0); ++s) {
    double linf = 0, sq = 0;
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
      ASSERT_GE(adv[i], 0.0f);
      ASSERT_LE(adv[i], 1.0f);
      const double d = double(adv[i]) - double(x[i]);
      linf = std::max(linf, std::abs(d));
      sq += d * d;
    }
    if (norm == Norm::linf)
      ASSERT_LE(linf, eps + 1e-6) << "sample " << s;
    else
      ASSERT_LE(std::sqrt(sq), eps + 1e-5) << "sample " << s;
  }
}

void expect_bitwise(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << "index " << i;
}

// Two-class model with logits [w.x, -w.x].
LogitFn signed_linear(std::vector<float> w) {
  const std::size_t d = w.size();
  std::vector<float> cols(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    cols[i * 2] = w[i];
    cols[i * 2 + 1] = -w[i];
  }
  auto weight = Tensor::from({d, 2}, cols);
  auto bias = Tensor::zeros({2});
  return [weight, bias](Tape<float>& t, const Tensor& x) { return ops::linear(t, x, weight, bias); };
}

// logits [0, (x - c)^2] on a scalar input: true class 0 loss grows with |x - c|.
LogitFn bowl(float c) {
  auto weight = Tensor::from({1, 2}, {0.0f, 1.0f});
  auto bias = Tensor::zeros({2});
  return [=](Tape<float>& t, const Tensor& x) {
    const auto centre = Tensor::full(x.shape(), c);
    const auto d = ops::sub(t, x, centre);
    return ops::linear(t, ops::hadamard(t, d, d), weight, bias);
  };
}

}  // namespace

TEST(AttackConfig, Validation) {
  AttackConfig ok;
  EXPECT_NO_THROW(ok.validate());
  auto bad = ok;
  bad.epsilon = -0.1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.steps = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.eot_samples = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.epsilon = std::nan("");
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_EQ(parse_family("eotpgd"), Family::eotpgd);
  EXPECT_EQ(parse_norm("l2"), Norm::l2);
  EXPECT_THROW(parse_family("cw"), std::invalid_argument);
  EXPECT_THROW(parse_norm("l1"), std::invalid_argument);
}

TEST(AttackConfig, Presets) {
  const auto m = mnist_training_attack();
  EXPECT_EQ(m.family, Family::pgd);
  EXPECT_DOUBLE_EQ(m.epsilon, 0.3);
  EXPECT_DOUBLE_EQ(m.step_size, 0.1);
  EXPECT_EQ(m.steps, 7);
  const auto c = cifar_training_attack();
  EXPECT_DOUBLE_EQ(c.epsilon, 8.0 / 255);
  EXPECT_DOUBLE_EQ(c.step_size, 2.0 / 255);
  EXPECT_EQ(c.steps, 10);
  EXPECT_EQ(pgd40_eval(0.3).steps, 40);
  EXPECT_DOUBLE_EQ(pgd40_eval(0.3).step_size, 0.01);
  const auto e = eotpgd_eval(8.0 / 255, 16);
  EXPECT_EQ(e.steps, 10);
  EXPECT_EQ(e.eot_samples, 16);
  EXPECT_DOUBLE_EQ(e.step_size, 2.0 / 255);
}

TEST(Fgsm, SignedLinearModelStepsAgainstW) {
  // dL/dx = -2 p1 w for class 0, so the step is eps * (-1, +1).
  const auto model = signed_linear({1.0f, -1.0f});
  const auto x = Tensor::from({1, 2}, {0.5f, 0.5f});
  const std::vector<std::int32_t> y{0};
  const auto adv = fgsm(model, x, y, AttackConfig{Family::fgsm, Norm::linf, 0.1, 0.1, 1, 1, false});
  EXPECT_EQ(adv[0], 0.5f - 0.1f);
  EXPECT_EQ(adv[1], 0.5f + 0.1f);
}

TEST(Attacks, ZeroEpsilonIsIdentity) {
  const auto model = defended_lenet(3);
  MaskCursor cursor(1, Phase::attack, 0, 0);
  const auto fn = frozen_logits(model, cursor, MaskMode::stochastic);
  const auto x = oracle::random_tensor({4, 1, 28, 28}, 2, 0, 1);
  const auto y = labels_for(4);
  for (auto family : {Family::fgsm, Family::pgd, Family::eotpgd})
    for (auto norm : {Norm::linf, Norm::l2}) {
      const AttackConfig cfg{family, norm, 0.0, 0.01, 5, 2, true};
      expect_bitwise(run_attack(fn, x, y, cfg, AttackRng{9}), x);
    }
}

TEST(Attacks, ContainmentOnThousandRandomInputs) {
  const auto model = defended_lenet(5);
  const std::size_t n = 1000;
  const auto x = oracle::random_tensor({n, 1, 28, 28}, 11, 0, 1);
  const auto y = labels_for(n);
  const AttackConfig configs[] = {
      {Family::fgsm, Norm::linf, 0.3, 0.3, 1, 1, false},   {Family::fgsm, Norm::l2, 2.0, 2.0, 1, 1, false},
      {Family::pgd, Norm::linf, 0.3, 0.1, 3, 1, true},     {Family::pgd, Norm::l2, 2.0, 0.5, 3, 1, true},
      {Family::eotpgd, Norm::linf, 8.0 / 255, 2.0 / 255, 2, 2, true},
  };
  for (const auto& cfg : configs) {
    MaskCursor cursor(7, Phase::attack, 0, 0);
    const auto adv = run_attack(frozen_logits(model, cursor, MaskMode::stochastic), x, y, cfg, AttackRng{13});
    SCOPED_TRACE(family_name(cfg.family) + "/" + norm_name(cfg.norm));
    expect_contained(adv, x, cfg.norm, cfg.epsilon);
  }
}

TEST(Attacks, RandomStartStaysContainedNearPixelBounds) {
  const auto model = signed_linear(std::vector<float>(16, 1.0f));
  auto x = Tensor::zeros({50, 16});
  for (std::size_t i = 0; i < x.size(); i += 2) x[i] = 1.0f;
  for (auto norm : {Norm::linf, Norm::l2}) {
    const auto adv = pgd(model, x, std::vector<std::int32_t>(50, 1), AttackConfig{Family::pgd, norm, 0.5, 0.2, 4, 1, true}, {3});
    expect_contained(adv, x, norm, 0.5);
  }
}

TEST(Pgd, OneStepWithoutRandomStartEqualsFgsmBitwise) {
  const auto model = nets::build_model(nets::lenet(), 21);
  const masking::DefendedModel<float> plain(model);
  const auto x = oracle::random_tensor({32, 1, 28, 28}, 4, 0, 1);
  const auto y = labels_for(32);
  for (auto norm : {Norm::linf, Norm::l2}) {
    const double eps = norm == Norm::linf ? 0.3 : 1.5;
    MaskCursor c1(0, Phase::attack, 0, 0), c2(0, Phase::attack, 0, 0);
    const auto a = fgsm(frozen_logits(plain, c1, MaskMode::disabled), x, y,
                        AttackConfig{Family::fgsm, norm, eps, eps, 1, 1, false});
    const auto b = pgd(frozen_logits(plain, c2, MaskMode::disabled), x, y,
                       AttackConfig{Family::pgd, norm, eps, eps, 1, 1, false}, {});
    SCOPED_TRACE(norm_name(norm));
    expect_bitwise(a, b);
  }
}

TEST(Pgd, QuadraticBowlReachesAnalyticBoundaryMaximizer) {
  struct Case {
    float x0, c;
    double eps;
    float want;
  };
  // The loss is convex in x, so the maximum over [x0-eps, x0+eps] n [0,1]
  // sits at the feasible end farthest from c.
  for (const auto& k : {Case{0.4f, 0.5f, 0.2, 0.2f}, Case{0.7f, 0.5f, 0.2, 0.9f}, Case{0.1f, 0.5f, 0.3, 0.0f},
                        Case{0.9f, 0.6f, 0.25, 1.0f}}) {
    const auto x = Tensor::from({1, 1}, {k.x0});
    const auto adv = pgd(bowl(k.c), x, std::vector<std::int32_t>{0},
                         AttackConfig{Family::pgd, Norm::linf, k.eps, 0.05, 40, 1, false}, {});
    EXPECT_NEAR(adv[0], k.want, 1e-6) << "x0=" << k.x0 << " c=" << k.c;
  }
}

TEST(EotPgd, SingleSampleOnDeterministicModelEqualsPgd) {
  const masking::DefendedModel<float> plain(nets::build_model(nets::lenet(), 8));
  const auto x = oracle::random_tensor({8, 1, 28, 28}, 6, 0, 1);
  const auto y = labels_for(8);
  MaskCursor c1(0, Phase::attack, 0, 0), c2(0, Phase::attack, 0, 0);
  const AttackRng rng{42, 3, 100};
  auto cfg = AttackConfig{Family::pgd, Norm::linf, 0.3, 0.05, 5, 1, true};
  const auto a = pgd(frozen_logits(plain, c1, MaskMode::disabled), x, y, cfg, rng);
  cfg.family = Family::eotpgd;
  const auto b = eot_pgd(frozen_logits(plain, c2, MaskMode::disabled), x, y, cfg, rng);
  expect_bitwise(a, b);
}

TEST(EotPgd, GradientVarianceShrinksWithSamples) {
  const auto model = defended_lenet(12);
  const auto x = oracle::random_tensor({1, 1, 28, 28}, 8, 0, 1);
  const std::vector<std::int32_t> y{3};
  std::vector<double> variance;
  for (int k : {1, 4, 16}) {
    const int reps = 20;
    std::vector<std::vector<float>> grads;
    for (int r = 0; r < reps; ++r) {
      MaskCursor cursor(99, Phase::attack, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(r));
      const auto g = input_gradient(frozen_logits(model, cursor, MaskMode::stochastic), x, y, k);
      grads.emplace_back(g.data().begin(), g.data().end());
    }
    double total = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double mean = 0, sq = 0;
      for (const auto& g : grads) mean += g[i];
      mean /= reps;
      for (const auto& g : grads) sq += (g[i] - mean) * (g[i] - mean);
      total += sq / (reps - 1);
    }
    variance.push_back(total);
  }
  EXPECT_GT(variance[0], variance[1]);
  EXPECT_GT(variance[1], variance[2]);
}

TEST(Attacks, NeverMutateParametersOrRunningStats) {
  auto model = masking::insert_dfm(nets::build_model(nets::resnet_small(), 1), {1, 4}, 0.1, 0.1, 2);
  std::vector<Tensor> before;
  for (const auto& e : model.named_tensors()) before.push_back(e.tensor.clone());
  const auto x = oracle::random_tensor({4, 3, 32, 32}, 1, 0, 1);
  const auto y = labels_for(4);
  MaskCursor cursor(0, Phase::attack, 0, 0);
  const auto fn = frozen_logits(model, cursor, MaskMode::stochastic);
  run_attack(fn, x, y, eotpgd_eval(8.0 / 255, 2), {1});
  run_attack(fn, x, y, AttackConfig{Family::fgsm, Norm::l2, 0.5, 0.5, 1, 1, false}, {});
  const auto after = model.named_tensors();
  ASSERT_EQ(after.size(), before.size());
  for (std::size_t i = 0; i < after.size(); ++i) {
    SCOPED_TRACE(after[i].name);
    expect_bitwise(after[i].tensor, before[i]);
    EXPECT_FALSE(after[i].tensor.has_grad() && [&] {
      for (float g : after[i].tensor.grad())
        if (g != 0.0f) return true;
      return false;
    }());
  }
}

TEST(Attacks, NonFiniteLossIsRejected) {
  const LogitFn broken = [](Tape<float>& t, const Tensor& x) {
    auto w = Tensor::from({2, 2}, {std::nanf(""), 0.0f, 0.0f, 0.0f});
    return ops::linear(t, x, w, Tensor::zeros({2}));
  };
  const auto x = Tensor::from({1, 2}, {0.5f, 0.5f});
  EXPECT_THROW(fgsm(broken, x, std::vector<std::int32_t>{0}, AttackConfig{Family::fgsm, Norm::linf, 0.1, 0.1, 1, 1, false}),
               NonFiniteGradient);
}

TEST(Attacks, SameRngGivesSameOutputAndSeedsDiffer) {
  const auto model = defended_lenet(4);
  const auto x = oracle::random_tensor({6, 1, 28, 28}, 3, 0, 1);
  const auto y = labels_for(6);
  auto run = [&](std::uint64_t seed) {
    MaskCursor cursor(5, Phase::attack, 0, 0);
    return pgd(frozen_logits(model, cursor, MaskMode::stochastic), x, y, mnist_training_attack(), {seed});
  };
  const auto a = run(1), b = run(1), c = run(2);
  expect_bitwise(a, b);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i] != c[i];
  EXPECT_TRUE(differs);
}
