#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfm/attacks.hpp"
#include "dfm/dataset.hpp"
#include "dfm/masking.hpp"

namespace dfm::eval {

struct AccuracyResult {
  double mean = 0;  // percent
  double std = 0;   // sample std over trials, 0 for a single trial
  std::vector<double> per_trial;
};

struct EvalOptions {
  int trials = 1;
  std::uint64_t seed = 0;
  masking::MaskMode masks = masking::MaskMode::stochastic;
  std::size_t batch_size = 200;
};

/// Percentage of samples whose prediction on the attacked input equals the
/// label; cfg == nullopt means clean accuracy. Each trial uses fresh mask
/// and random-start draws. Prediction draws do not depend on the attack, so
/// an eps = 0 attack reproduces clean accuracy exactly.
AccuracyResult robust_accuracy(const masking::DefendedModel<float>& model, const Dataset& data,
                               const std::optional<attacks::AttackConfig>& cfg, const EvalOptions& opts);

/// Number of trials to use by default: 5 for a stochastic model, else 1.
int default_trials(const masking::DefendedModel<float>& model, masking::MaskMode masks);

struct ReportRow {
  std::string attack;  // "none" for clean accuracy
  std::string norm;
  double epsilon = 0;
  int steps = 0;
  int eot_samples = 0;
  int trials = 1;
  double acc_mean = 0;
  double acc_std = 0;
};

ReportRow make_row(const std::optional<attacks::AttackConfig>& cfg, const AccuracyResult& result);

struct EvalReport {
  std::vector<ReportRow> rows;

  static std::string header();
  std::string to_csv() const;
  void write(const std::string& path) const;
};

struct FeatureStats {
  std::vector<std::int32_t> classes;              // classes with >= 2 samples
  std::vector<std::vector<double>> centroids;     // per class, length D
  double intra_std = 0;                           // mean per-dim std, averaged over classes
  double separation = 0;                          // mean pairwise centroid L2 distance
  double mahalanobis = 0;                         // same, under pooled diagonal covariance
  std::vector<std::vector<double>> kl;            // KL(class i || class j), diagonal Gaussians
  std::vector<std::string> warnings;

  std::string summary() const;
};

constexpr double kVarianceFloor = 1e-6;

/// features is row-major [N, dim].
FeatureStats compute_feature_stats(std::span<const float> features, std::size_t dim,
                                   std::span<const std::int32_t> labels, std::size_t num_classes);

struct FeatureTable {
  Shape chw;
  std::vector<std::int32_t> labels;
  std::vector<float> values;  // [N, numel(chw)]
};

/// Flattened f_k (1-based block, after the DFM unit if one is installed) for
/// every sample.
FeatureTable collect_features(const masking::DefendedModel<float>& model, const Dataset& data, std::uint32_t block,
                              masking::MaskMode masks, std::uint64_t seed, std::size_t batch_size = 200);

FeatureStats feature_stats(const masking::DefendedModel<float>& model, const Dataset& data, std::uint32_t block,
                           bool stochastic, std::uint64_t seed = 0);

/// Header "label,f<c>_<y>_<x>,...", then one row per sample: label followed
/// by the feature values (6 significant digits).
void export_features(const masking::DefendedModel<float>& model, const Dataset& data, std::uint32_t block,
                     const std::string& path, masking::MaskMode masks, std::uint64_t seed = 0);
void write_feature_csv(const FeatureTable& table, const std::string& path);
FeatureTable read_feature_csv(const std::string& path);

}  // namespace dfm::eval
