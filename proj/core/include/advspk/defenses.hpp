#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "advspk/attacks.hpp"
#include "advspk/training.hpp"

namespace advspk {

struct AdvTrainConfig {
  /// Inner attack, fgsm or pgd. PGD defaults to 10 iterations with alpha = epsilon / 5.
  AttackConfig attack = [] {
    AttackConfig a;
    a.kind = AttackKind::pgd;
    a.iterations = 10;
    return a;
  }();
  double w_at = 0.5;
  OptimizerConfig optimizer;

  void validate() const;
};

/// Distance between model outputs used by the Lipschitz penalty.
enum class OutputDistance { l1, squared_l2 };

struct AlrConfig {
  double xi = 10.0;
  std::size_t n_power_iterations = 1;
  double epsilon_alr = 0.002;
  double lipschitz_target = 1.0;
  double lambda_alr = 0.1;
  OutputDistance output_distance = OutputDistance::l1;
  OptimizerConfig optimizer;

  void validate() const;
};

struct DefenseTrace {
  TrainTrace trace;
  /// Samples whose inner attack failed and were replaced by the clean input.
  std::size_t attack_fallbacks = 0;
  /// Power iterations that hit a zero gradient and kept the previous direction.
  std::size_t zero_gradient_events = 0;
};

/// Batched inner attack against a frozen model in evaluation mode. Rows of x
/// are attacked independently; seeds[i] drives the random start of row i.
Tensor batch_linf_attack(const Classifier& model, const Tensor& x, std::span<const int> labels,
                         const AttackConfig& config, std::span<const std::uint64_t> seeds);

DefenseTrace adversarial_train(Model& model, const Dataset& data, const AdvTrainConfig& config);

/// Any differentiable map from [B, D] inputs to [B, K] outputs.
using DifferentiableMap = std::function<Var(Graph&, Var)>;
DifferentiableMap as_map(const Classifier& model);

struct AlrDirections {
  Tensor unit;  // [B, D], each row of unit l2 norm
  Tensor eta;   // epsilon_alr * unit
  std::size_t zero_gradient_events = 0;
};
/// Power iteration for the direction maximizing the output change around each
/// row of x, starting from a unit Gaussian draw.
AlrDirections alr_perturbation(const DifferentiableMap& f, const Tensor& x, const AlrConfig& config,
                               std::mt19937_64& rng);

/// Per-row [d_Y(f(x), f(x~)) / ||x - x~||_2 - K]_+ for [B, K] outputs; returns [B].
Var alr_penalty(Var f_x, Var f_x_tilde, std::span<const double> input_distance, double lipschitz_target,
                OutputDistance distance = OutputDistance::l1);
/// Single-input convenience; throws std::invalid_argument when ||x - x~||_2 < 1e-12.
double alr_penalty(const DifferentiableMap& f, std::span<const double> x, std::span<const double> x_tilde,
                   double lipschitz_target, OutputDistance distance = OutputDistance::l1);

DefenseTrace alr_train(Model& model, const Dataset& data, const AlrConfig& config);

/// Every minibatch holds the clean crops and copies with additive Gaussian
/// noise of standard deviation sigma, clamped to [-1, 1].
TrainTrace noise_augment_train(Model& model, const Dataset& data, double sigma, const OptimizerConfig& config);

}  // namespace advspk
