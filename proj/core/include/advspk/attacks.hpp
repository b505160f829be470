#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advspk/corpus.hpp"
#include "advspk/models.hpp"

namespace advspk {

enum class AttackKind { fgsm, pgd, cw_l2, cw_linf };
std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);
/// True for attacks bounded by an l-infinity radius.
bool is_linf(AttackKind kind);

struct AttackConfig {
  AttackKind kind = AttackKind::fgsm;
  double epsilon = 0.002;
  /// PGD step; epsilon / 5 when unset.
  std::optional<double> alpha;
  std::size_t iterations = 100;
  bool random_start = false;
  /// Evaluate every PGD gradient at the clean input instead of the iterate.
  bool gradient_at_origin = false;
  double delta = 0.0;
  double c_init = 0.01;
  std::size_t c_search_steps = 9;
  std::size_t cw_iterations = 1000;
  double cw_learning_rate = 0.005;
  /// Stop a CW round once it has succeeded and the objective has not improved
  /// for this many iterations; 0 disables.
  std::size_t cw_patience = 0;
  double clip_min = -1.0;
  double clip_max = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  double step_size() const { return alpha.value_or(epsilon / 5.0); }
  /// Step size of the l-infinity CW inner optimizer, capped at epsilon / 10.
  double cw_linf_learning_rate() const;
};

struct Perturbation {
  std::vector<double> eta;
  double linf = 0.0;
  double l2 = 0.0;
  std::size_t iterations = 0;
  bool success = false;
};

struct AttackResult {
  std::vector<double> adversarial;
  Perturbation perturbation;
  int benign_prediction = 0;
  int adversarial_prediction = 0;
};

/// Affine classifier log_softmax(W x + b), the closed-form oracle for attacks.
class LinearClassifier : public Classifier {
 public:
  LinearClassifier(Tensor weight, Tensor bias);
  /// Two classes with logits [0, w.x + b].
  static LinearClassifier binary(std::span<const double> w, double b);
  std::size_t n_classes() const override { return weight_.dim(0); }
  Var log_posteriors(Graph& graph, Var inputs) const override;

 private:
  Tensor weight_, bias_;
};

/// [s_t - max_{j != t} s_j + delta]_+, ties in the max going to the lowest index.
double cw_objective(std::span<const double> scores, int target, double delta);
/// Differentiable form over a [1, C] log-posterior row.
Var cw_objective(Var log_posteriors, int target, double delta);

/// Cross-entropy value and its gradient with respect to the input waveform.
struct InputGradient {
  std::vector<double> grad;
  std::vector<double> log_posteriors;
  double loss = 0.0;
};
InputGradient loss_gradient(const Classifier& model, std::span<const double> x, int label);

double linf_norm(std::span<const double> v);
double l2_norm(std::span<const double> v);

AttackResult fgsm(const Classifier& model, std::span<const double> x, int label, double epsilon, double clip_min = -1.0,
                  double clip_max = 1.0);
/// Called after every PGD iteration with the iteration index (1-based) and iterate.
using IterateObserver = std::function<void(std::size_t, std::span<const double>)>;
AttackResult pgd(const Classifier& model, std::span<const double> x, int label, const AttackConfig& config,
                 const IterateObserver& observer = {});
AttackResult cw_l2(const Classifier& model, std::span<const double> x, int label, const AttackConfig& config);
AttackResult cw_linf(const Classifier& model, std::span<const double> x, int label, const AttackConfig& config);
/// Dispatches on config.kind; seed drives the PGD random start.
AttackResult run_attack(const Classifier& model, std::span<const double> x, int label, const AttackConfig& config);

/// Seed for sample index i of a batch run with the given base seed.
std::uint64_t sample_seed(std::uint64_t base, std::size_t index);

struct BatchAttackReport {
  std::vector<AttackResult> results;
  std::vector<std::string> errors;  // empty string where the sample succeeded
  std::size_t failed_samples = 0;
  double benign_accuracy = 0.0;
  /// Fraction of attacked samples still classified correctly; samples whose
  /// attack raised an error are excluded.
  double adversarial_accuracy = 0.0;
};

/// Attacks every sample, in parallel over threads (0 = hardware concurrency).
/// Output is independent of the thread count.
BatchAttackReport attack_batch(const Classifier& model, std::span<const std::vector<double>> waveforms,
                               std::span<const int> labels, const AttackConfig& config, std::size_t threads = 0);
BatchAttackReport attack_batch(const Classifier& model, const Dataset& data, const AttackConfig& config,
                               std::size_t threads = 0);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace advspk
