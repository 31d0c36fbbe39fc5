#include "dfm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "dfm/eval.hpp"
#include "dfm/io/checkpoint.hpp"
#include "dfm/io/datasets.hpp"

namespace dfm {

namespace fs = std::filesystem;

namespace {

Dataset limited(Dataset d, std::size_t limit) { return limit && limit < d.size() ? d.head(limit) : d; }

bool is_mnist_shape(const Shape& s) { return s == Shape{1, 28, 28}; }

Dataset load_test_split(const Shape& input, const std::string& dir, std::size_t limit) {
  const fs::path p(dir);
  if (is_mnist_shape(input))
    return limited(io::read_idx_pair((p / "t10k-images-idx3-ubyte").string(), (p / "t10k-labels-idx1-ubyte").string(),
                                     Split::test),
                   limit);
  if (input == Shape{3, 32, 32}) return limited(io::read_cifar_batches({(p / "test_batch.bin").string()}, Split::test), limit);
  throw std::invalid_argument("no dataset matches model input " + to_string(input));
}

void write_metrics(const fs::path& path, const train::TrainState& state) {
  std::ofstream out(path);
  out << train::metrics_csv_header() << '\n';
  for (const auto& m : state.log) out << train::metrics_csv_row(m) << '\n';
}

// Options shared by the commands that act on a trained checkpoint.
struct ModelArgs {
  std::string checkpoint;
  std::string data_dir;
  std::size_t limit = 1000;
  std::uint64_t seed = 0;
  bool deterministic = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "DFMC checkpoint")->required();
    cmd->add_option("--data-dir", data_dir, "dataset directory")->required();
    cmd->add_option("--limit", limit, "test samples to use (0 = all)");
    cmd->add_option("--seed", seed, "seed for masks and random starts");
    cmd->add_flag("--deterministic", deterministic, "disable DFM masks");
  }
  masking::MaskMode masks() const {
    return deterministic ? masking::MaskMode::disabled : masking::MaskMode::stochastic;
  }
};

struct AttackArgs {
  std::string family = "pgd";
  std::string norm = "linf";
  std::optional<double> epsilon;
  std::optional<double> step;
  int steps = 40;
  int eot_samples = 1;
  bool no_random_start = false;

  void add_to(CLI::App* cmd, bool allow_none) {
    cmd->add_option("--attack", family, allow_none ? "fgsm | pgd | eotpgd | none" : "fgsm | pgd | eotpgd");
    cmd->add_option("--norm", norm, "linf | l2");
    cmd->add_option("--epsilon", epsilon, "perturbation budget");
    cmd->add_option("--step", step, "step size");
    cmd->add_option("--steps", steps, "iterations");
    cmd->add_option("--eot-samples", eot_samples, "gradient samples per EOT step");
    cmd->add_flag("--no-random-start", no_random_start, "start from the clean input");
  }

  std::optional<attacks::AttackConfig> resolve(const Shape& input) const {
    if (family == "none") return std::nullopt;
    const bool mnist = is_mnist_shape(input);
    auto cfg = attacks::pgd40_eval(epsilon.value_or(mnist ? 0.3 : 8.0 / 255.0));
    cfg.family = attacks::parse_family(family);
    cfg.norm = attacks::parse_norm(norm);
    if (step) cfg.step_size = *step;
    cfg.steps = steps;
    cfg.eot_samples = eot_samples;
    cfg.random_start = !no_random_start;
    cfg.validate();
    return cfg;
  }
};

int cmd_train(const std::string& config_path, const std::string& out_override, const std::string& resume,
              std::ostream& out) {
  auto cfg = io::load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  const auto plan = cfg.to_plan();

  masking::DefendedModel<float> model(nets::build_model(cfg.architecture(), cfg.seed));
  train::TrainState state;
  if (!resume.empty()) {
    auto ck = io::load_checkpoint(resume);
    model = std::move(ck.model);
    state = std::move(ck.state);
  }
  if (plan.e1 == 0 && plan.e2 == 0 && resume.empty()) {
    io::save_checkpoint((dir / "init.dfmc").string(), model, state, cfg.seed);
    io::save_checkpoint((dir / "final.dfmc").string(), model, state, cfg.seed);
    write_metrics(dir / "metrics.csv", state);
    out << "wrote initialization checkpoint " << (dir / "final.dfmc").string() << '\n';
    return 0;
  }

  const auto [train_set, test_set] = load_datasets(cfg);
  (void)test_set;
  out << train::metrics_csv_header() << '\n';
  const auto on_epoch = [&](const train::EpochMetrics& m, const train::TrainState& s) {
    out << train::metrics_csv_row(m) << std::endl;
    write_metrics(dir / "metrics.csv", s);
    io::save_checkpoint((dir / "last.dfmc").string(), model, s, cfg.seed);
  };
  if (state.phase == 1) {
    train::train_phase1(model, train_set, plan, state, on_epoch);
    io::save_checkpoint((dir / "phase1.dfmc").string(), model, state, cfg.seed);
  }
  if (!plan.blocks.empty() && plan.e2 > 0) train::train_phase2(model, train_set, plan, state, on_epoch);
  io::save_checkpoint((dir / "final.dfmc").string(), model, state, cfg.seed);
  write_metrics(dir / "metrics.csv", state);
  return 0;
}

int cmd_attack(const ModelArgs& m, const AttackArgs& a, const std::string& path, std::ostream& out) {
  const auto ck = io::load_checkpoint(m.checkpoint);
  const auto& input = ck.model.base().spec().input;
  const auto data = load_test_split(input, m.data_dir, m.limit);
  const auto cfg = a.resolve(input);
  if (!cfg) throw std::invalid_argument("attack requires --attack fgsm, pgd or eotpgd");

  masking::MaskCursor cursor(m.seed, masking::Phase::attack, 0, 0);
  const auto logits = attacks::frozen_logits(ck.model, cursor, m.masks());
  const auto x_adv = attacks::run_attack(logits, data.images, data.labels, *cfg, attacks::AttackRng{m.seed, 0, 0});

  io::CheckpointFile f;
  f.tensors.push_back(io::to_record("x_adv", x_adv));
  io::Record labels{"labels", {static_cast<std::uint32_t>(data.size())}, std::vector<std::uint32_t>(data.size())};
  std::memcpy(labels.words.data(), data.labels.data(), data.size() * 4);
  f.cursor.push_back(std::move(labels));
  io::write_file(path, f);

  double linf = 0;
  for (std::size_t i = 0; i < x_adv.size(); ++i)
    linf = std::max(linf, static_cast<double>(std::abs(x_adv[i] - data.images[i])));
  out << "wrote " << data.size() << " adversarial samples to " << path << " (max |delta| " << linf << ")\n";
  return 0;
}

int cmd_eval(const ModelArgs& m, const AttackArgs& a, std::optional<int> trials, const std::string& path,
             std::ostream& out) {
  const auto ck = io::load_checkpoint(m.checkpoint);
  const auto data = load_test_split(ck.model.base().spec().input, m.data_dir, m.limit);
  eval::EvalOptions opts;
  opts.seed = m.seed;
  opts.masks = m.masks();
  opts.trials = trials.value_or(eval::default_trials(ck.model, opts.masks));
  eval::EvalReport report;
  report.rows.push_back(eval::make_row(std::nullopt, eval::robust_accuracy(ck.model, data, std::nullopt, opts)));
  if (const auto cfg = a.resolve(ck.model.base().spec().input))
    report.rows.push_back(eval::make_row(cfg, eval::robust_accuracy(ck.model, data, cfg, opts)));
  if (path.empty())
    out << report.to_csv();
  else
    report.write(path);
  return 0;
}

std::uint32_t resolve_block(const masking::DefendedModel<float>& model, std::uint32_t block) {
  return block ? block : static_cast<std::uint32_t>(model.base().num_blocks());
}

int cmd_diagnose(const ModelArgs& m, std::uint32_t block, const std::string& path, std::ostream& out) {
  const auto ck = io::load_checkpoint(m.checkpoint);
  const auto data = load_test_split(ck.model.base().spec().input, m.data_dir, m.limit);
  const auto stats = eval::feature_stats(ck.model, data, resolve_block(ck.model, block), !m.deterministic, m.seed);
  if (path.empty()) {
    out << stats.summary();
  } else {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << stats.summary();
  }
  return 0;
}

int cmd_export(const ModelArgs& m, std::uint32_t block, const std::string& path, std::ostream& out) {
  const auto ck = io::load_checkpoint(m.checkpoint);
  const auto data = load_test_split(ck.model.base().spec().input, m.data_dir, m.limit);
  eval::export_features(ck.model, data, resolve_block(ck.model, block), path, m.masks(), m.seed);
  out << "wrote features of " << data.size() << " samples to " << path << '\n';
  return 0;
}

}  // namespace

std::pair<Dataset, Dataset> load_datasets(const io::RunConfig& cfg) {
  if (cfg.data_dir.empty()) throw std::invalid_argument("data_dir is not set");
  auto [train_set, test_set] = cfg.dataset == "mnist" ? io::load_mnist(cfg.data_dir) : io::load_cifar10(cfg.data_dir);
  return {limited(std::move(train_set), cfg.train_limit), limited(std::move(test_set), cfg.test_limit)};
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial training with decoupled feature masking", "dfmctl"};
  app.require_subcommand(1);

  std::string config, out_dir, resume, path;
  auto* train_cmd = app.add_subcommand("train", "run phase 1 and phase 2 training");
  train_cmd->add_option("--config", config, "key=value run config")->required();
  train_cmd->add_option("--out-dir", out_dir, "override out_dir");
  train_cmd->add_option("--resume", resume, "continue from a checkpoint");

  ModelArgs model_args;
  AttackArgs attack_args;
  std::optional<int> trials;
  std::uint32_t block = 0;

  auto* attack_cmd = app.add_subcommand("attack", "craft adversarial examples and save them");
  model_args.add_to(attack_cmd);
  attack_args.add_to(attack_cmd, false);
  attack_cmd->add_option("--out", path, "output file")->required();

  auto* eval_cmd = app.add_subcommand("eval", "clean and robust accuracy report");
  model_args.add_to(eval_cmd);
  attack_args.add_to(eval_cmd, true);
  eval_cmd->add_option("--trials", trials, "stochastic trials");
  eval_cmd->add_option("--out", path, "report CSV (default stdout)");

  auto* diag_cmd = app.add_subcommand("diagnose", "feature distribution statistics");
  model_args.add_to(diag_cmd);
  diag_cmd->add_option("--block", block, "1-based block (default last)");
  diag_cmd->add_option("--out", path, "summary file (default stdout)");

  auto* export_cmd = app.add_subcommand("export-features", "write block features as CSV");
  model_args.add_to(export_cmd);
  export_cmd->add_option("--block", block, "1-based block (default last)");
  export_cmd->add_option("--out", path, "feature CSV")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config, out_dir, resume, out);
    if (attack_cmd->parsed()) return cmd_attack(model_args, attack_args, path, out);
    if (eval_cmd->parsed()) return cmd_eval(model_args, attack_args, trials, path, out);
    if (diag_cmd->parsed()) return cmd_diagnose(model_args, block, path, out);
    return cmd_export(model_args, block, path, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run_cli(int argc, const char* const* argv) {
  return run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}

}  // namespace dfm
