#include "dfm/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "dfm/ops.hpp"
#include "dfm/random.hpp"

namespace dfm::attacks {

std::string family_name(Family f) {
  switch (f) {
    case Family::fgsm: return "fgsm";
    case Family::pgd: return "pgd";
    case Family::eotpgd: return "eotpgd";
  }
  return "?";
}

std::string norm_name(Norm n) { return n == Norm::linf ? "linf" : "l2"; }

Family parse_family(const std::string& s) {
  if (s == "fgsm") return Family::fgsm;
  if (s == "pgd") return Family::pgd;
  if (s == "eotpgd") return Family::eotpgd;
  throw std::invalid_argument("unknown attack family '" + s + "' (expected fgsm, pgd or eotpgd)");
}

Norm parse_norm(const std::string& s) {
  if (s == "linf") return Norm::linf;
  if (s == "l2") return Norm::l2;
  throw std::invalid_argument("unknown attack norm '" + s + "' (expected linf or l2)");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("attack epsilon must be >= 0");
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw std::invalid_argument("attack step size must be >= 0");
  if (steps < 1) throw std::invalid_argument("attack steps must be >= 1");
  if (eot_samples < 1) throw std::invalid_argument("attack eot_samples must be >= 1");
}

AttackConfig mnist_training_attack() { return AttackConfig{Family::pgd, Norm::linf, 0.3, 0.1, 7, 1, true}; }
AttackConfig cifar_training_attack() {
  return AttackConfig{Family::pgd, Norm::linf, 8.0 / 255, 2.0 / 255, 10, 1, true};
}
AttackConfig pgd40_eval(double epsilon) { return AttackConfig{Family::pgd, Norm::linf, epsilon, 0.01, 40, 1, true}; }
AttackConfig eotpgd_eval(double epsilon, int k) {
  return AttackConfig{Family::eotpgd, Norm::linf, epsilon, 2.0 / 255, 10, k, true};
}

Tensor input_gradient(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels, int samples) {
  auto total = Tensor::zeros(x.shape());
  auto acc = total.data();
  for (int s = 0; s < samples; ++s) {
    auto leaf = x.clone();
    leaf.drop_grad();
    leaf.set_requires_grad(true);
    Tape<float> tape;
    auto loss = ops::softmax_cross_entropy(tape, model(tape, leaf), labels);
    if (!std::isfinite(loss.item())) throw NonFiniteGradient("attack loss is not finite");
    tape.backward(loss);
    auto g = leaf.grad();
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  }
  if (samples > 1)
    for (auto& v : acc) v /= static_cast<float>(samples);
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (!std::isfinite(acc[i]))
      throw NonFiniteGradient("non-finite input gradient at flat index " + std::to_string(i));
  return total;
}

namespace {

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

float clip01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

std::size_t per_sample(const Tensor& x) { return x.size() / x.dim(0); }

void project(Tensor& adv, const Tensor& x, Norm norm, float eps) {
  auto a = adv.data();
  auto o = x.data();
  if (norm == Norm::linf) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = clip01(std::min(o[i] + eps, std::max(o[i] - eps, a[i])));
    return;
  }
  const std::size_t per = per_sample(x);
  for (std::size_t s = 0; s < x.dim(0); ++s) {
    double sq = 0;
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) sq += double(a[i] - o[i]) * double(a[i] - o[i]);
    const double norm2 = std::sqrt(sq);
    const float scale = norm2 > eps ? static_cast<float>(eps / norm2) : 1.0f;
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) a[i] = clip01(o[i] + (a[i] - o[i]) * scale);
  }
}

void ascend(Tensor& adv, const Tensor& grad, Norm norm, float step) {
  auto a = adv.data();
  auto g = grad.data();
  if (norm == Norm::linf) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = a[i] + step * sign(g[i]);
    return;
  }
  const std::size_t per = per_sample(adv);
  for (std::size_t s = 0; s < adv.dim(0); ++s) {
    double sq = 0;
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) sq += double(g[i]) * double(g[i]);
    if (sq == 0.0) continue;
    const float k = static_cast<float>(step / std::sqrt(sq));
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) a[i] = a[i] + k * g[i];
  }
}

void random_start(Tensor& adv, const Tensor& x, Norm norm, double eps, const AttackRng& rng) {
  auto a = adv.data();
  auto o = x.data();
  const std::size_t per = per_sample(x);
  for (std::size_t s = 0; s < x.dim(0); ++s) {
    CounterStream stream(rng.seed, stream_address({rng.tag, rng.sample_offset + s, 0x5754}));
    if (norm == Norm::linf) {
      for (std::size_t i = s * per; i < (s + 1) * per; ++i)
        a[i] = o[i] + static_cast<float>((2.0 * stream.uniform() - 1.0) * eps);
    } else {
      // Uniform in the L2 ball: gaussian direction, radius eps * u^(1/d).
      std::vector<double> dir(per);
      double sq = 0;
      for (auto& d : dir) {
        d = stream.normal();
        sq += d * d;
      }
      const double radius = eps * std::pow(stream.uniform(), 1.0 / static_cast<double>(per));
      const double k = sq > 0 ? radius / std::sqrt(sq) : 0.0;
      for (std::size_t i = 0; i < per; ++i) a[s * per + i] = o[s * per + i] + static_cast<float>(dir[i] * k);
    }
  }
  project(adv, x, norm, static_cast<float>(eps));
}

Tensor iterate(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels, const AttackConfig& cfg,
               const AttackRng& rng, int samples) {
  cfg.validate();
  auto adv = x.clone();
  adv.drop_grad();
  adv.set_requires_grad(false);
  if (cfg.epsilon == 0.0) return adv;
  const float eps = static_cast<float>(cfg.epsilon);
  if (cfg.random_start) random_start(adv, x, cfg.norm, cfg.epsilon, rng);
  for (int step = 0; step < cfg.steps; ++step) {
    auto g = input_gradient(model, adv, labels, samples);
    ascend(adv, g, cfg.norm, static_cast<float>(cfg.step_size));
    project(adv, x, cfg.norm, eps);
  }
  return adv;
}

}  // namespace

Tensor fgsm(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels, const AttackConfig& cfg) {
  cfg.validate();
  auto adv = x.clone();
  adv.drop_grad();
  adv.set_requires_grad(false);
  if (cfg.epsilon == 0.0) return adv;
  const float eps = static_cast<float>(cfg.epsilon);
  auto g = input_gradient(model, x, labels, 1);
  if (cfg.norm == Norm::linf) {
    auto a = adv.data();
    auto gs = g.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = clip01(a[i] + eps * sign(gs[i]));
  } else {
    ascend(adv, g, Norm::l2, eps);
    project(adv, x, Norm::l2, eps);
  }
  return adv;
}

Tensor pgd(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels, const AttackConfig& cfg,
           const AttackRng& rng) {
  return iterate(model, x, labels, cfg, rng, 1);
}

Tensor eot_pgd(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels, const AttackConfig& cfg,
               const AttackRng& rng) {
  return iterate(model, x, labels, cfg, rng, cfg.eot_samples);
}

Tensor run_attack(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels,
                  const AttackConfig& cfg, const AttackRng& rng) {
  switch (cfg.family) {
    case Family::fgsm: return fgsm(model, x, labels, cfg);
    case Family::pgd: return pgd(model, x, labels, cfg, rng);
    case Family::eotpgd: return eot_pgd(model, x, labels, cfg, rng);
  }
  throw std::invalid_argument("unknown attack family");
}

LogitFn frozen_logits(const masking::DefendedModel<float>& model, masking::MaskCursor& cursor,
                      masking::MaskMode mode, std::uint64_t sample_offset) {
  return [&model, &cursor, mode, sample_offset](Tape<float>& tape, const Tensor& x) {
    const masking::MaskPolicy policy{mode, cursor.next(), sample_offset};
    return model.forward(tape, x, nets::RunMode{false, false}, policy);
  };
}

}  // namespace dfm::attacks
