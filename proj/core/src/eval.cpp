#include "dfm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dfm::eval {

namespace {

std::size_t count_correct(const Tensor& logits, std::span<const std::int32_t> labels) {
  const std::size_t m = logits.dim(1);
  auto z = logits.data();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = z.subspan(i * m, m);
    correct += (std::max_element(row.begin(), row.end()) - row.begin()) == labels[i];
  }
  return correct;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

AccuracyResult robust_accuracy(const masking::DefendedModel<float>& model, const Dataset& data,
                               const std::optional<attacks::AttackConfig>& cfg, const EvalOptions& opts) {
  if (data.size() == 0) throw std::invalid_argument("robust_accuracy: empty dataset");
  if (opts.trials < 1) throw std::invalid_argument("robust_accuracy: trials must be >= 1");
  if (cfg) cfg->validate();
  AccuracyResult result;
  const std::size_t bs = std::max<std::size_t>(1, opts.batch_size);
  for (int trial = 0; trial < opts.trials; ++trial) {
    std::size_t correct = 0;
    for (std::size_t start = 0, b = 0; start < data.size(); start += bs, ++b) {
      std::vector<std::size_t> rows(std::min(bs, data.size() - start));
      std::iota(rows.begin(), rows.end(), start);
      auto x = data.gather(rows);
      const auto y = data.gather_labels(rows);
      const auto t = static_cast<std::uint64_t>(trial);
      if (cfg) {
        masking::MaskCursor attack_cursor(opts.seed, masking::Phase::attack, t, b);
        const attacks::AttackRng rng{opts.seed, stream_address({0xE7A1, t, b}), 0};
        x = attacks::run_attack(attacks::frozen_logits(model, attack_cursor, opts.masks), x, y, *cfg, rng);
      }
      masking::MaskCursor predict_cursor(opts.seed, masking::Phase::eval, t, b);
      Tape<float> tape(Tape<float>::Recording::off);
      const auto logits = model.forward(tape, x, nets::RunMode{false, false},
                                        masking::MaskPolicy{opts.masks, predict_cursor.next(), 0});
      correct += count_correct(logits, y);
    }
    result.per_trial.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(data.size()));
  }
  const double n = static_cast<double>(result.per_trial.size());
  result.mean = std::accumulate(result.per_trial.begin(), result.per_trial.end(), 0.0) / n;
  if (result.per_trial.size() > 1) {
    double ss = 0;
    for (double v : result.per_trial) ss += (v - result.mean) * (v - result.mean);
    result.std = std::sqrt(ss / (n - 1));
  }
  return result;
}

int default_trials(const masking::DefendedModel<float>& model, masking::MaskMode masks) {
  return model.has_units() && masks == masking::MaskMode::stochastic ? 5 : 1;
}

ReportRow make_row(const std::optional<attacks::AttackConfig>& cfg, const AccuracyResult& result) {
  ReportRow row;
  if (cfg) {
    row.attack = attacks::family_name(cfg->family);
    row.norm = attacks::norm_name(cfg->norm);
    row.epsilon = cfg->epsilon;
    row.steps = cfg->family == attacks::Family::fgsm ? 1 : cfg->steps;
    row.eot_samples = cfg->family == attacks::Family::eotpgd ? cfg->eot_samples : 1;
  } else {
    row.attack = "none";
    row.norm = "none";
  }
  row.trials = static_cast<int>(result.per_trial.size());
  row.acc_mean = result.mean;
  row.acc_std = result.std;
  return row;
}

std::string EvalReport::header() { return "attack,norm,epsilon,steps,eot_samples,trials,acc_mean,acc_std"; }

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << header() << '\n';
  for (const auto& r : rows)
    os << r.attack << ',' << r.norm << ',' << fmt6(r.epsilon) << ',' << r.steps << ',' << r.eot_samples << ','
       << r.trials << ',' << fmt6(r.acc_mean) << ',' << fmt6(r.acc_std) << '\n';
  return os.str();
}

void EvalReport::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_csv();
  if (!out) throw std::runtime_error("failed writing " + path);
}

FeatureStats compute_feature_stats(std::span<const float> features, std::size_t dim,
                                   std::span<const std::int32_t> labels, std::size_t num_classes) {
  if (dim == 0 || features.size() != labels.size() * dim)
    throw std::invalid_argument("feature matrix does not match label count");
  FeatureStats st;
  std::vector<std::vector<double>> variances;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == static_cast<std::int32_t>(c)) rows.push_back(i);
    if (rows.size() < 2) {
      if (!rows.empty())
        st.warnings.push_back("class " + std::to_string(c) + " has fewer than 2 samples; excluded");
      continue;
    }
    std::vector<double> mean(dim, 0.0), var(dim, 0.0);
    for (auto r : rows)
      for (std::size_t d = 0; d < dim; ++d) mean[d] += features[r * dim + d];
    for (auto& m : mean) m /= static_cast<double>(rows.size());
    for (auto r : rows)
      for (std::size_t d = 0; d < dim; ++d) {
        const double e = features[r * dim + d] - mean[d];
        var[d] += e * e;
      }
    for (auto& v : var) v /= static_cast<double>(rows.size() - 1);
    st.classes.push_back(static_cast<std::int32_t>(c));
    st.centroids.push_back(std::move(mean));
    variances.push_back(std::move(var));
  }
  const std::size_t k = st.classes.size();
  if (k == 0) {
    st.warnings.push_back("no class has at least 2 samples");
    return st;
  }
  double std_sum = 0;
  for (const auto& var : variances) {
    double s = 0;
    for (double v : var) s += std::sqrt(v);
    std_sum += s / static_cast<double>(dim);
  }
  st.intra_std = std_sum / static_cast<double>(k);

  std::vector<double> pooled(dim, 0.0);
  for (const auto& var : variances)
    for (std::size_t d = 0; d < dim; ++d) pooled[d] += var[d] / static_cast<double>(k);
  for (auto& v : pooled) v = std::max(v, kVarianceFloor);

  st.kl.assign(k, std::vector<double>(k, 0.0));
  double sep = 0, maha = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      double kl = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double vi = std::max(variances[i][d], kVarianceFloor);
        const double vj = std::max(variances[j][d], kVarianceFloor);
        const double delta = st.centroids[i][d] - st.centroids[j][d];
        kl += std::log(vj / vi) + (vi + delta * delta) / vj - 1.0;
      }
      st.kl[i][j] = std::max(0.0, 0.5 * kl);
      if (j < i) continue;
      double e2 = 0, m2 = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double delta = st.centroids[i][d] - st.centroids[j][d];
        e2 += delta * delta;
        m2 += delta * delta / pooled[d];
      }
      sep += std::sqrt(e2);
      maha += std::sqrt(m2);
      ++pairs;
    }
  if (pairs) {
    st.separation = sep / static_cast<double>(pairs);
    st.mahalanobis = maha / static_cast<double>(pairs);
  }
  return st;
}

std::string FeatureStats::summary() const {
  double kl_mean = 0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < kl.size(); ++i)
    for (std::size_t j = 0; j < kl.size(); ++j)
      if (i != j) kl_mean += kl[i][j], ++cnt;
  if (cnt) kl_mean /= static_cast<double>(cnt);
  std::ostringstream os;
  os << "classes,intra_std,separation,mahalanobis,kl_mean\n"
     << classes.size() << ',' << fmt6(intra_std) << ',' << fmt6(separation) << ',' << fmt6(mahalanobis) << ','
     << fmt6(kl_mean) << '\n';
  return os.str();
}

FeatureTable collect_features(const masking::DefendedModel<float>& model, const Dataset& data, std::uint32_t block,
                              masking::MaskMode masks, std::uint64_t seed, std::size_t batch_size) {
  if (data.size() == 0) throw std::invalid_argument("collect_features: empty dataset");
  const auto k = model.base().num_blocks();
  if (block < 1 || block > k)
    throw std::out_of_range("tap block " + std::to_string(block) + " outside [1," + std::to_string(k) + "]");
  FeatureTable table;
  table.chw = model.base().tap_shapes()[block - 1];
  table.labels = data.labels;
  const std::size_t dim = numel(table.chw);
  table.values.reserve(data.size() * dim);
  const std::size_t bs = std::max<std::size_t>(1, batch_size);
  for (std::size_t start = 0, b = 0; start < data.size(); start += bs, ++b) {
    std::vector<std::size_t> rows(std::min(bs, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    masking::MaskCursor cursor(seed, masking::Phase::diag, 0, b);
    Tape<float> tape(Tape<float>::Recording::off);
    const auto out = model.forward_with_taps(tape, data.gather(rows), nets::RunMode{false, false},
                                             masking::MaskPolicy{masks, cursor.next(), 0});
    const auto f = out.features[block - 1].data();
    table.values.insert(table.values.end(), f.begin(), f.end());
  }
  return table;
}

FeatureStats feature_stats(const masking::DefendedModel<float>& model, const Dataset& data, std::uint32_t block,
                           bool stochastic, std::uint64_t seed) {
  const auto table = collect_features(model, data, block,
                                      stochastic ? masking::MaskMode::stochastic : masking::MaskMode::disabled, seed);
  return compute_feature_stats(table.values, numel(table.chw), table.labels, data.classes);
}

void write_feature_csv(const FeatureTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const std::size_t dim = numel(table.chw);
  out << "label";
  for (std::size_t c = 0; c < table.chw[0]; ++c)
    for (std::size_t y = 0; y < table.chw[1]; ++y)
      for (std::size_t x = 0; x < table.chw[2]; ++x) out << ",f" << c << '_' << y << '_' << x;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < table.labels.size(); ++i) {
    out << table.labels[i];
    for (std::size_t d = 0; d < dim; ++d) {
      std::snprintf(buf, sizeof buf, ",%.6g", static_cast<double>(table.values[i * dim + d]));
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

void export_features(const masking::DefendedModel<float>& model, const Dataset& data, std::uint32_t block,
                     const std::string& path, masking::MaskMode masks, std::uint64_t seed) {
  write_feature_csv(collect_features(model, data, block, masks, seed), path);
}

FeatureTable read_feature_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("label", 0) != 0) throw std::runtime_error(path + ": missing header");
  FeatureTable table;
  const auto last = line.rfind(",f");
  if (last == std::string::npos) throw std::runtime_error(path + ": header has no feature columns");
  std::size_t c = 0, y = 0, x = 0;
  if (std::sscanf(line.c_str() + last, ",f%zu_%zu_%zu", &c, &y, &x) != 3)
    throw std::runtime_error(path + ": malformed feature column name");
  table.chw = {c + 1, y + 1, x + 1};
  const std::size_t dim = numel(table.chw);
  if (static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) != dim)
    throw std::runtime_error(path + ": header column count does not match feature shape");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    table.labels.push_back(static_cast<std::int32_t>(std::stol(cell)));
    std::size_t got = 0;
    while (std::getline(row, cell, ',')) {
      table.values.push_back(std::stof(cell));
      ++got;
    }
    if (got != dim) throw std::runtime_error(path + ": row " + std::to_string(table.labels.size()) + " has wrong width");
  }
  return table;
}

}  // namespace dfm::eval
