#include "advspk/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "advspk/ops.hpp"

namespace advspk {

void AdvTrainConfig::validate() const {
  attack.validate();
  if (attack.kind != AttackKind::fgsm && attack.kind != AttackKind::pgd)
    throw std::invalid_argument("adversarial training: inner attack must be fgsm or pgd");
  if (!(w_at >= 0 && w_at <= 1)) throw std::invalid_argument("adversarial training: w_at must lie in [0, 1]");
  optimizer.validate();
}

void AlrConfig::validate() const {
  if (!(xi > 0)) throw std::invalid_argument("alr: xi must be positive");
  if (n_power_iterations == 0) throw std::invalid_argument("alr: n_power_iterations must be at least 1");
  if (!(epsilon_alr > 0)) throw std::invalid_argument("alr: epsilon_alr must be positive");
  if (!(lipschitz_target >= 0)) throw std::invalid_argument("alr: lipschitz_target must be nonnegative");
  if (!(lambda_alr >= 0)) throw std::invalid_argument("alr: lambda_alr must be nonnegative");
  optimizer.validate();
}

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Gradient of the summed per-row cross-entropy with respect to each row of x.
Tensor batch_loss_gradient(const Classifier& model, const Tensor& x, std::span<const int> labels) {
  Graph g(false);
  Var in = g.input(x);
  Var loss = ops::scale(ops::nll_loss(model.log_posteriors(g, in), labels), static_cast<double>(labels.size()));
  g.backward(loss);
  return g.grad(in);
}

std::uint64_t step_seed(std::uint64_t base, std::size_t step) { return sample_seed(base ^ 0xa5a5a5a5a5a5a5a5ULL, step); }

}  // namespace

Tensor batch_linf_attack(const Classifier& model, const Tensor& x, std::span<const int> labels,
                         const AttackConfig& config, std::span<const std::uint64_t> seeds) {
  config.validate();
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const double eps = config.epsilon;
  Tensor adv = x;
  if (config.kind == AttackKind::fgsm) {
    const Tensor g = batch_loss_gradient(model, x, labels);
    for (std::size_t i = 0; i < adv.size(); ++i)
      adv[i] = std::clamp(x[i] + eps * sign(g[i]), config.clip_min, config.clip_max);
    return adv;
  }
  if (config.kind != AttackKind::pgd) throw std::invalid_argument("batched inner attack supports fgsm and pgd");
  if (config.random_start) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::mt19937_64 rng(seeds[r]);
      std::uniform_real_distribution<double> u(-eps, eps);
      for (std::size_t c = 0; c < cols; ++c)
        adv[r * cols + c] = std::clamp(x[r * cols + c] + u(rng), config.clip_min, config.clip_max);
    }
  }
  const double alpha = config.step_size();
  Tensor origin_grad;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Tensor g;
    if (config.gradient_at_origin) {
      if (origin_grad.empty()) origin_grad = batch_loss_gradient(model, x, labels);
      g = origin_grad;
    } else {
      g = batch_loss_gradient(model, adv, labels);
    }
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double cand = std::clamp(adv[i] + alpha * sign(g[i]), x[i] - eps, x[i] + eps);
      adv[i] = std::clamp(cand, config.clip_min, config.clip_max);
    }
  }
  return adv;
}

DefenseTrace adversarial_train(Model& model, const Dataset& data, const AdvTrainConfig& config) {
  config.validate();
  DefenseTrace out;
  std::size_t step = 0;
  auto loss = [&](Graph& g, const Model& m, const TrainBatch& batch, BatchStatsMap& stats) {
    const std::size_t rows = batch.labels.size();
    std::vector<std::uint64_t> seeds(rows);
    const std::uint64_t base = step_seed(config.attack.seed, step++);
    for (std::size_t i = 0; i < rows; ++i) seeds[i] = sample_seed(base, i);
    Tensor adv;
    try {
      adv = batch_linf_attack(m, batch.waveforms, batch.labels, config.attack, seeds);
      if (!adv.all_finite()) throw std::runtime_error("non-finite adversarial batch");
    } catch (const std::exception&) {
      adv = batch.waveforms;
      out.attack_fallbacks += rows;
    }
    Var lp = m.forward(g, g.constant_ref(batch.waveforms), true, &stats);
    Var clean = ops::nll_loss(lp, batch.labels);
    Var lp_adv = m.forward(g, g.constant(std::move(adv)), true, nullptr);
    Var adv_loss = ops::nll_loss(lp_adv, batch.labels);
    StepLoss s;
    s.total = ops::add(ops::scale(clean, 1.0 - config.w_at), ops::scale(adv_loss, config.w_at));
    s.clean_loss = clean.value().item();
    s.aux_loss = adv_loss.value().item();
    s.clean_log_posteriors = lp;
    return s;
  };
  out.trace = train_with_loss(model, data, config.optimizer, loss);
  return out;
}

DifferentiableMap as_map(const Classifier& model) {
  return [&model](Graph& g, Var x) { return model.log_posteriors(g, x); };
}

namespace {

Var output_distance(Var a, Var b, OutputDistance d) {
  Var diff = ops::sub(a, b);
  return ops::row_sum(d == OutputDistance::l1 ? ops::abs(diff) : ops::square(diff));
}

}  // namespace

AlrDirections alr_perturbation(const DifferentiableMap& f, const Tensor& x, const AlrConfig& config,
                               std::mt19937_64& rng) {
  config.validate();
  if (x.rank() != 2) throw ShapeError("alr_perturbation expects [B, D], got " + to_string(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  AlrDirections out;
  out.unit = Tensor(x.shape());
  std::normal_distribution<double> normal(0.0, 1.0);
  auto normalize_rows = [&](const Tensor& v, bool keep_on_zero) {
    for (std::size_t r = 0; r < rows; ++r) {
      double n2 = 0.0;
      for (std::size_t c = 0; c < cols; ++c) n2 += v[r * cols + c] * v[r * cols + c];
      const double n = std::sqrt(n2);
      if (!(n > 0) || !std::isfinite(n)) {
        if (keep_on_zero) ++out.zero_gradient_events;
        continue;
      }
      for (std::size_t c = 0; c < cols; ++c) out.unit[r * cols + c] = v[r * cols + c] / n;
    }
  };
  Tensor draw(x.shape());
  for (auto& v : draw.storage()) v = normal(rng);
  normalize_rows(draw, false);

  Tensor f_x;
  {
    Graph g(false);
    f_x = f(g, g.constant_ref(x)).value();
  }
  for (std::size_t it = 0; it < config.n_power_iterations; ++it) {
    Graph g(false);
    Var eta = g.input(out.unit);
    Var probe = ops::add(g.constant_ref(x), ops::scale(eta, config.xi));
    Var d = ops::sum(output_distance(f(g, probe), g.constant_ref(f_x), config.output_distance));
    g.backward(d);
    normalize_rows(g.grad(eta), true);
  }
  out.eta = out.unit;
  for (auto& v : out.eta.storage()) v *= config.epsilon_alr;
  return out;
}

Var alr_penalty(Var f_x, Var f_x_tilde, std::span<const double> input_distance, double lipschitz_target,
                OutputDistance distance) {
  const std::size_t rows = f_x.shape().at(0);
  if (input_distance.size() != rows) throw ShapeError("alr_penalty: one input distance per row required");
  Tensor inv({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (!(input_distance[r] >= 1e-12)) throw std::invalid_argument("alr_penalty: input distance below 1e-12");
    inv[r] = 1.0 / input_distance[r];
  }
  Var ratio = ops::mul(output_distance(f_x_tilde, f_x, distance), f_x.graph().constant(std::move(inv)));
  return ops::relu(ops::add_scalar(ratio, -lipschitz_target));
}

double alr_penalty(const DifferentiableMap& f, std::span<const double> x, std::span<const double> x_tilde,
                   double lipschitz_target, OutputDistance distance) {
  if (x.size() != x_tilde.size()) throw ShapeError("alr_penalty: inputs differ in length");
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - x_tilde[i]) * (x[i] - x_tilde[i]);
  const double dx = std::sqrt(d2);
  Graph g(false);
  Var a = f(g, g.constant(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end()))));
  Var b = f(g, g.constant(Tensor({1, x.size()}, std::vector<double>(x_tilde.begin(), x_tilde.end()))));
  const double dxs[1] = {dx};
  return alr_penalty(a, b, dxs, lipschitz_target, distance).value().item();
}

DefenseTrace alr_train(Model& model, const Dataset& data, const AlrConfig& config) {
  config.validate();
  DefenseTrace out;
  std::mt19937_64 rng(config.optimizer.seed ^ 0x5bd1e9955bd1e995ULL);
  auto loss = [&](Graph& g, const Model& m, const TrainBatch& batch, BatchStatsMap& stats) {
    Var lp = m.forward(g, g.constant_ref(batch.waveforms), true, &stats);
    Var ce = ops::nll_loss(lp, batch.labels);
    StepLoss s;
    s.clean_log_posteriors = lp;
    s.clean_loss = ce.value().item();
    if (config.lambda_alr == 0.0) {
      s.total = ce;
      return s;
    }
    const DifferentiableMap train_map = [&m](Graph& pg, Var v) { return m.forward(pg, v, true); };
    const AlrDirections dir = alr_perturbation(train_map, batch.waveforms, config, rng);
    out.zero_gradient_events += dir.zero_gradient_events;
    Tensor x_tilde = batch.waveforms;
    for (std::size_t i = 0; i < x_tilde.size(); ++i) x_tilde[i] += dir.eta[i];
    const std::size_t rows = batch.labels.size(), cols = batch.waveforms.dim(1);
    std::vector<double> dx(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double d = x_tilde[r * cols + c] - batch.waveforms[r * cols + c];
        d2 += d * d;
      }
      dx[r] = std::sqrt(d2);
    }
    Var f_xt = m.forward(g, g.constant(std::move(x_tilde)), true);
    Var penalty = ops::mean(alr_penalty(lp, f_xt, dx, config.lipschitz_target, config.output_distance));
    s.aux_loss = penalty.value().item();
    s.total = ops::add(ce, ops::scale(penalty, config.lambda_alr));
    return s;
  };
  out.trace = train_with_loss(model, data, config.optimizer, loss);
  return out;
}

TrainTrace noise_augment_train(Model& model, const Dataset& data, double sigma, const OptimizerConfig& config) {
  if (!(sigma >= 0)) throw std::invalid_argument("noise augmentation: sigma must be nonnegative");
  std::mt19937_64 rng(config.seed ^ 0x94d049bb133111ebULL);
  auto loss = [&](Graph& g, const Model& m, const TrainBatch& batch, BatchStatsMap& stats) {
    const std::size_t rows = batch.labels.size(), cols = batch.waveforms.dim(1);
    std::vector<double> both(2 * rows * cols);
    std::copy(batch.waveforms.raw(), batch.waveforms.raw() + rows * cols, both.begin());
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < rows * cols; ++i)
      both[rows * cols + i] = std::clamp(batch.waveforms[i] + sigma * noise(rng), -1.0, 1.0);
    std::vector<int> labels(batch.labels);
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    Var lp = m.forward(g, g.constant(Tensor({2 * rows, cols}, std::move(both))), true, &stats);
    Var ce = ops::nll_loss(lp, labels);
    StepLoss s;
    s.total = ce;
    s.clean_loss = ce.value().item();
    s.clean_log_posteriors = lp;
    return s;
  };
  return train_with_loss(model, data, config, loss);
}

}  // namespace advspk
