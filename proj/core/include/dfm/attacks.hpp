#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

#include "dfm/masking.hpp"
#include "dfm/tensor.hpp"

namespace dfm::attacks {

enum class Family { fgsm, pgd, eotpgd };
enum class Norm { linf, l2 };

std::string family_name(Family f);
std::string norm_name(Norm n);
Family parse_family(const std::string& s);
Norm parse_norm(const std::string& s);

struct AttackConfig {
  Family family = Family::pgd;
  Norm norm = Norm::linf;
  double epsilon = 0.3;
  double step_size = 0.01;
  int steps = 40;
  int eot_samples = 1;
  bool random_start = true;

  /// epsilon >= 0 (0 is the identity attack), steps >= 1, eot_samples >= 1.
  void validate() const;
};

/// MNIST training recipe: PGD-7, eps 0.3, step 0.1, random start.
AttackConfig mnist_training_attack();
/// CIFAR training recipe: PGD-10, eps 8/255, step 2/255, random start.
AttackConfig cifar_training_attack();
/// Evaluation PGD-40 with step 0.01 at the given budget.
AttackConfig pgd40_eval(double epsilon);
/// EOT-PGD: 10 steps of 2/255 at the given budget, k gradient samples.
AttackConfig eotpgd_eval(double epsilon, int k);

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One forward pass of the attacked model (fresh randomness per call when
/// the model is stochastic). Must not update parameters or running stats.
using LogitFn = std::function<Tensor(Tape<float>&, const Tensor&)>;

/// Addresses the random-start draws: sample s uses stream (tag, offset + s).
struct AttackRng {
  std::uint64_t seed = 0;
  std::uint64_t tag = 0;
  std::uint64_t sample_offset = 0;
};

/// Gradient of the mean cross-entropy w.r.t. x, averaged over `samples`
/// forward passes. Throws NonFiniteGradient on NaN/inf.
Tensor input_gradient(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels, int samples = 1);

Tensor fgsm(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels, const AttackConfig& cfg);
/// Iterated steps with projection onto the eps-ball and [0,1] after each one.
Tensor pgd(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels, const AttackConfig& cfg,
           const AttackRng& rng);
/// PGD whose step direction averages cfg.eot_samples stochastic gradients.
Tensor eot_pgd(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels, const AttackConfig& cfg,
               const AttackRng& rng);
/// Dispatches on cfg.family.
Tensor run_attack(const LogitFn& model, const Tensor& x, std::span<const std::int32_t> labels,
                  const AttackConfig& cfg, const AttackRng& rng);

/// Eval-mode, parameter-frozen view of a defended model; each call consumes
/// one draw from the cursor.
LogitFn frozen_logits(const masking::DefendedModel<float>& model, masking::MaskCursor& cursor,
                      masking::MaskMode mode, std::uint64_t sample_offset = 0);

}  // namespace dfm::attacks
