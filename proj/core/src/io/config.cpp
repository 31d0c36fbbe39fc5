#include "dfm/io/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace dfm::io {

namespace {

const std::set<std::string> kKeys = {"arch",          "dataset",        "data_dir",     "seed",
                                     "e1",            "e2",             "batch_size",   "lr",
                                     "momentum",      "weight_decay",   "r1",           "r2",
                                     "blocks",        "attack.family",  "attack.norm",  "attack.epsilon",
                                     "attack.step",   "attack.steps",   "attack.eot_samples", "attack.warmup_epochs",
                                     "eval.trials",   "out_dir",        "train_limit",  "test_limit"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct Entry {
  std::string value;
  int line;
};

[[noreturn]] void bad(const std::string& key, const Entry& e, const std::string& what) {
  throw ConfigError("line " + std::to_string(e.line) + ": " + key + " = '" + e.value + "': " + what);
}

template <class I>
I to_int(const std::string& key, const Entry& e) {
  I v{};
  const auto* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc{} || p != end) bad(key, e, "expected a non-negative integer");
  return v;
}

double to_real_part(const std::string& s, bool& ok) {
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  ok = ec == std::errc{} && p == end && !s.empty();
  return v;
}

// Accepts plain reals and a/b fractions such as 8/255.
double to_real(const std::string& key, const Entry& e) {
  bool ok = false;
  const auto slash = e.value.find('/');
  if (slash == std::string::npos) {
    const double v = to_real_part(e.value, ok);
    if (!ok) bad(key, e, "expected a real number");
    return v;
  }
  bool ok2 = false;
  const double num = to_real_part(e.value.substr(0, slash), ok);
  const double den = to_real_part(e.value.substr(slash + 1), ok2);
  if (!ok || !ok2 || den == 0) bad(key, e, "expected a real number or fraction");
  return num / den;
}

std::set<std::uint32_t> to_blocks(const std::string& key, const Entry& e) {
  std::set<std::uint32_t> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.insert(to_int<std::uint32_t>(key, Entry{item, e.line}));
  }
  return out;
}

}  // namespace

train::TrainPlan RunConfig::to_plan() const {
  train::TrainPlan p;
  p.e1 = e1;
  p.e2 = e2;
  p.batch_size = batch_size;
  p.lr1 = train::step_decay(lr, e1);
  p.lr2 = {{0, lr / 10}};
  p.momentum = momentum;
  p.weight_decay = weight_decay;
  p.attack = attack;
  p.blocks = blocks;
  p.r1 = r1;
  p.r2 = r2;
  p.seed = seed;
  p.eps_warmup_epochs = warmup_epochs;
  return p;
}

nets::ArchitectureSpec RunConfig::architecture() const {
  const bool mnist = dataset == "mnist";
  const Shape input = mnist ? Shape{1, 28, 28} : Shape{3, 32, 32};
  return arch == nets::Arch::lenet ? nets::lenet(input) : nets::resnet_small(input);
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, Entry> kv;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key=value");
    const auto key = trim(s.substr(0, eq));
    if (!kKeys.count(key)) throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
    if (kv.count(key)) throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
    kv[key] = Entry{trim(s.substr(eq + 1)), line};
  }

  RunConfig c;
  if (auto it = kv.find("dataset"); it != kv.end()) {
    if (it->second.value != "mnist" && it->second.value != "cifar10")
      bad("dataset", it->second, "expected mnist or cifar10");
    c.dataset = it->second.value;
  }
  if (c.dataset == "cifar10") {
    c.arch = nets::Arch::resnet_small;
    c.blocks = {1, 2, 4};
    c.attack = attacks::cifar_training_attack();
    c.lr = 0.1;
    c.warmup_epochs = 0;
  }

  for (const auto& [key, e] : kv) {
    if (key == "dataset") continue;
    if (key == "arch") {
      try {
        c.arch = nets::parse_arch(e.value);
      } catch (const std::invalid_argument&) {
        bad(key, e, "expected lenet or resnet-small");
      }
    } else if (key == "data_dir") {
      c.data_dir = e.value;
    } else if (key == "out_dir") {
      c.out_dir = e.value;
    } else if (key == "seed") {
      c.seed = to_int<std::uint64_t>(key, e);
    } else if (key == "e1") {
      c.e1 = to_int<int>(key, e);
    } else if (key == "e2") {
      c.e2 = to_int<int>(key, e);
    } else if (key == "batch_size") {
      c.batch_size = to_int<std::size_t>(key, e);
    } else if (key == "train_limit") {
      c.train_limit = to_int<std::size_t>(key, e);
    } else if (key == "test_limit") {
      c.test_limit = to_int<std::size_t>(key, e);
    } else if (key == "lr") {
      c.lr = to_real(key, e);
    } else if (key == "momentum") {
      c.momentum = to_real(key, e);
    } else if (key == "weight_decay") {
      c.weight_decay = to_real(key, e);
    } else if (key == "r1") {
      c.r1 = to_real(key, e);
    } else if (key == "r2") {
      c.r2 = to_real(key, e);
    } else if (key == "blocks") {
      c.blocks = to_blocks(key, e);
    } else if (key == "attack.family") {
      try {
        c.attack.family = attacks::parse_family(e.value);
      } catch (const std::invalid_argument&) {
        bad(key, e, "expected fgsm, pgd or eotpgd");
      }
    } else if (key == "attack.norm") {
      try {
        c.attack.norm = attacks::parse_norm(e.value);
      } catch (const std::invalid_argument&) {
        bad(key, e, "expected linf or l2");
      }
    } else if (key == "attack.epsilon") {
      c.attack.epsilon = to_real(key, e);
    } else if (key == "attack.step") {
      c.attack.step_size = to_real(key, e);
    } else if (key == "attack.steps") {
      c.attack.steps = to_int<int>(key, e);
    } else if (key == "attack.eot_samples") {
      c.attack.eot_samples = to_int<int>(key, e);
    } else if (key == "attack.warmup_epochs") {
      c.warmup_epochs = to_int<int>(key, e);
    } else if (key == "eval.trials") {
      c.eval_trials = to_int<int>(key, e);
    }
  }

  try {
    c.attack.validate();
    c.to_plan().validate();
    if (c.eval_trials < 1) throw std::invalid_argument("eval.trials must be >= 1");
    const auto k = c.architecture().num_blocks();
    for (auto b : c.blocks)
      if (b < 1 || b > k) throw std::invalid_argument("block " + std::to_string(b) + " outside [1," + std::to_string(k) + "]");
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace dfm::io
