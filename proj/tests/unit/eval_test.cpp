#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dfm/eval.hpp"
#include "synthetic.hpp"

using namespace dfm;
using namespace dfm::eval;
namespace fs = std::filesystem;

namespace {

masking::DefendedModel<float> defended_lenet(std::uint64_t seed) {
  return masking::insert_dfm(nets::build_model(nets::lenet(), seed), {1, 2}, 0.1, 0.3, seed + 1);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dfm_eval_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Diagonal-Gaussian KL(p || q), written out directly.
double gaussian_kl(const std::vector<double>& mu_p, const std::vector<double>& sd_p, const std::vector<double>& mu_q,
                   const std::vector<double>& sd_q) {
  double kl = 0;
  for (std::size_t d = 0; d < mu_p.size(); ++d)
    kl += std::log(sd_q[d] / sd_p[d]) + (sd_p[d] * sd_p[d] + (mu_p[d] - mu_q[d]) * (mu_p[d] - mu_q[d])) /
                                            (2 * sd_q[d] * sd_q[d]) -
          0.5;
  return kl;
}

}  // namespace

TEST(RobustAccuracy, ZeroEpsilonEqualsCleanExactly) {
  const auto model = defended_lenet(1);
  const auto data = synthetic::make_dataset(300, {1, 28, 28}, 5, Split::test);
  EvalOptions opts;
  opts.trials = 3;
  opts.seed = 4;
  opts.batch_size = 128;
  const auto clean = robust_accuracy(model, data, std::nullopt, opts);
  for (auto family : {attacks::Family::fgsm, attacks::Family::pgd, attacks::Family::eotpgd}) {
    const auto attacked =
        robust_accuracy(model, data, attacks::AttackConfig{family, attacks::Norm::linf, 0.0, 0.01, 3, 2, true}, opts);
    EXPECT_EQ(attacked.per_trial, clean.per_trial);
    EXPECT_EQ(attacked.mean, clean.mean);
    EXPECT_EQ(attacked.std, clean.std);
  }
}

TEST(RobustAccuracy, UntrainedModelIsNearChance) {
  const masking::DefendedModel<float> model(nets::build_model(nets::lenet(), 3));
  // Pure-noise images: labels carry no information about the input.
  const auto data = synthetic::make_dataset(2000, {1, 28, 28}, 9, Split::test, 10, 1.0);
  const auto r = robust_accuracy(model, data, std::nullopt, EvalOptions{});
  EXPECT_NEAR(r.mean, 10.0, 2.0);
}

TEST(RobustAccuracy, TrialsAndValidation) {
  const auto model = defended_lenet(2);
  const auto data = synthetic::make_dataset(100, {1, 28, 28}, 1, Split::test);
  EvalOptions opts;
  opts.trials = 5;
  const auto r = robust_accuracy(model, data, std::nullopt, opts);
  ASSERT_EQ(r.per_trial.size(), 5u);
  for (double a : r.per_trial) {
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 100.0);
  }
  EXPECT_GE(r.std, 0.0);
  opts.trials = 0;
  EXPECT_THROW(robust_accuracy(model, data, std::nullopt, opts), std::invalid_argument);
  Dataset empty;
  EXPECT_THROW(robust_accuracy(model, empty, std::nullopt, EvalOptions{}), std::invalid_argument);
  EXPECT_EQ(default_trials(model, masking::MaskMode::stochastic), 5);
  EXPECT_EQ(default_trials(model, masking::MaskMode::disabled), 1);
  EXPECT_EQ(default_trials(masking::DefendedModel<float>(nets::build_model(nets::lenet(), 0)),
                           masking::MaskMode::stochastic),
            1);
}

TEST(RobustAccuracy, SameSeedIsBitwiseReproducible) {
  const auto model = defended_lenet(6);
  const auto data = synthetic::make_dataset(120, {1, 28, 28}, 2, Split::test);
  EvalOptions opts;
  opts.trials = 2;
  opts.seed = 77;
  const auto cfg = attacks::pgd40_eval(0.3);
  auto short_cfg = cfg;
  short_cfg.steps = 3;
  const auto a = robust_accuracy(model, data, short_cfg, opts);
  const auto b = robust_accuracy(model, data, short_cfg, opts);
  EXPECT_EQ(a.per_trial, b.per_trial);
}

TEST(Report, CsvLayout) {
  EvalReport report;
  report.rows.push_back(make_row(std::nullopt, AccuracyResult{98.25, 0.0, {98.25}}));
  report.rows.push_back(make_row(attacks::eotpgd_eval(8.0 / 255, 16), AccuracyResult{51.123456, 0.5, {1, 2, 3, 4, 5}}));
  report.rows.push_back(make_row(attacks::AttackConfig{attacks::Family::fgsm, attacks::Norm::l2, 2.0, 2.0, 9, 4, false},
                                 AccuracyResult{10, 0, {10}}));
  EXPECT_EQ(report.to_csv(),
            "attack,norm,epsilon,steps,eot_samples,trials,acc_mean,acc_std\n"
            "none,none,0,0,0,1,98.25,0\n"
            "eotpgd,linf,0.0313725,10,16,5,51.1235,0.5\n"
            "fgsm,l2,2,1,1,1,10,0\n");
}

TEST(FeatureStats, IdenticalFeaturesHaveZeroSpread) {
  const std::vector<float> f{1, 2, 1, 2, 1, 2, 5, 5, 5, 5};
  const std::vector<std::int32_t> y{0, 0, 0, 1, 1};
  const auto st = compute_feature_stats(f, 2, y, 2);
  EXPECT_EQ(st.intra_std, 0.0);
  ASSERT_EQ(st.classes.size(), 2u);
  EXPECT_EQ(st.centroids[0], (std::vector<double>{1, 2}));
}

TEST(FeatureStats, DegenerateClassesUseVarianceFloor) {
  // Two point masses at distance 5 (3-4-5 triangle).
  const std::vector<float> f{0, 0, 0, 0, 3, 4, 3, 4};
  const std::vector<std::int32_t> y{0, 0, 1, 1};
  const auto st = compute_feature_stats(f, 2, y, 2);
  EXPECT_DOUBLE_EQ(st.separation, 5.0);
  const double capped = 0.5 * 25.0 / kVarianceFloor;
  EXPECT_NEAR(st.kl[0][1], capped, capped * 1e-12);
  EXPECT_TRUE(std::isfinite(st.kl[1][0]));
  EXPECT_EQ(st.kl[0][0], 0.0);
}

TEST(FeatureStats, KlMatchesClosedFormOnSampledGaussians) {
  const std::vector<double> mu0{0.0, 1.0, -0.5}, sd0{1.0, 0.5, 2.0};
  const std::vector<double> mu1{0.7, 0.2, 0.5}, sd1{1.5, 0.8, 1.0};
  const std::size_t n = 10000, dim = 3;
  std::vector<float> f;
  std::vector<std::int32_t> y;
  CounterStream rng(123, 0x6A55);
  for (std::size_t i = 0; i < 2 * n; ++i) {
    const bool one = i % 2;
    for (std::size_t d = 0; d < dim; ++d)
      f.push_back(static_cast<float>((one ? mu1 : mu0)[d] + (one ? sd1 : sd0)[d] * rng.normal()));
    y.push_back(one);
  }
  const auto st = compute_feature_stats(f, dim, y, 2);
  const double want01 = gaussian_kl(mu0, sd0, mu1, sd1), want10 = gaussian_kl(mu1, sd1, mu0, sd0);
  EXPECT_NEAR(st.kl[0][1], want01, 0.05 * want01);
  EXPECT_NEAR(st.kl[1][0], want10, 0.05 * want10);
  double sep = 0;
  for (std::size_t d = 0; d < dim; ++d) sep += (mu0[d] - mu1[d]) * (mu0[d] - mu1[d]);
  EXPECT_NEAR(st.separation, std::sqrt(sep), 0.05 * std::sqrt(sep));
  const double want_std = ((1.0 + 0.5 + 2.0) / 3 + (1.5 + 0.8 + 1.0) / 3) / 2;
  EXPECT_NEAR(st.intra_std, want_std, 0.05 * want_std);
}

TEST(FeatureStats, PermutationInvariantAndWarnsOnTinyClasses) {
  const std::size_t n = 300, dim = 4;
  std::vector<float> f(n * dim);
  std::vector<std::int32_t> y(n);
  CounterStream rng(8, 1);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<std::int32_t>(i % 3);
    for (std::size_t d = 0; d < dim; ++d) f[i * dim + d] = static_cast<float>(rng.normal() + y[i]);
  }
  y[0] = 3;  // the only sample of class 3
  const auto a = compute_feature_stats(f, dim, y, 4);
  std::vector<float> fr(f.size());
  std::vector<std::int32_t> yr(n);
  for (std::size_t i = 0; i < n; ++i) {
    yr[i] = y[n - 1 - i];
    std::copy_n(f.begin() + static_cast<long>((n - 1 - i) * dim), dim, fr.begin() + static_cast<long>(i * dim));
  }
  const auto b = compute_feature_stats(fr, dim, yr, 4);
  EXPECT_EQ(a.classes, (std::vector<std::int32_t>{0, 1, 2}));
  ASSERT_EQ(a.warnings.size(), 1u);
  EXPECT_NE(a.warnings[0].find("class 3"), std::string::npos);
  EXPECT_NEAR(a.intra_std, b.intra_std, 1e-4);
  EXPECT_NEAR(a.separation, b.separation, 1e-4);
  EXPECT_NEAR(a.mahalanobis, b.mahalanobis, 1e-4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(a.kl[i][j], b.kl[i][j], 1e-4);
      EXPECT_GE(a.kl[i][j], 0.0);
    }
  EXPECT_THROW(compute_feature_stats(f, 5, y, 4), std::invalid_argument);
}

TEST(FeatureExport, RoundTripAndDeterminism) {
  const auto dir = temp_dir("export");
  const auto model = defended_lenet(3);
  const auto data = synthetic::make_dataset(25, {1, 28, 28}, 4, Split::test);
  const auto a = (dir / "a.csv").string(), b = (dir / "b.csv").string();
  export_features(model, data, 2, a, masking::MaskMode::disabled);
  export_features(model, data, 2, b, masking::MaskMode::disabled);
  EXPECT_EQ(slurp(a), slurp(b));

  const auto text = slurp(a);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 26);
  EXPECT_EQ(text.rfind("label,f0_0_0,f0_0_1,", 0), 0u);

  const auto table = read_feature_csv(a);
  EXPECT_EQ(table.chw, (Shape{16, 4, 4}));
  EXPECT_EQ(table.labels, data.labels);
  const auto want = collect_features(model, data, 2, masking::MaskMode::disabled, 0);
  ASSERT_EQ(table.values.size(), want.values.size());
  for (std::size_t i = 0; i < want.values.size(); ++i)
    ASSERT_NEAR(table.values[i], want.values[i], 1e-5 * std::max(1.0f, std::abs(want.values[i])));
  fs::remove_all(dir);
}

TEST(FeatureExport, StochasticTapSeesMaskedFeatures) {
  const auto model = defended_lenet(3);
  const auto data = synthetic::make_dataset(10, {1, 28, 28}, 4, Split::test);
  const auto off = collect_features(model, data, 1, masking::MaskMode::disabled, 1);
  const auto on = collect_features(model, data, 1, masking::MaskMode::stochastic, 1);
  EXPECT_NE(off.values, on.values);
  EXPECT_EQ(on.values, collect_features(model, data, 1, masking::MaskMode::stochastic, 1).values);
  EXPECT_THROW(collect_features(model, data, 3, masking::MaskMode::disabled, 0), std::out_of_range);
  EXPECT_THROW(collect_features(model, data, 0, masking::MaskMode::disabled, 0), std::out_of_range);
}

TEST(FeatureExport, UnwritablePathFails) {
  const auto model = defended_lenet(3);
  const auto data = synthetic::make_dataset(2, {1, 28, 28}, 4, Split::test);
  EXPECT_THROW(export_features(model, data, 1, "/nonexistent-dir/x.csv", masking::MaskMode::disabled),
               std::runtime_error);
  EXPECT_THROW(read_feature_csv("/nonexistent-dir/x.csv"), std::runtime_error);
}
