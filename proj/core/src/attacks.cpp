#include "advspk/attacks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "advspk/ops.hpp"

namespace advspk {

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::cw_l2: return "cw_l2";
    case AttackKind::cw_linf: return "cw_linf";
  }
  return "unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
  if (name == "fgsm") return AttackKind::fgsm;
  if (name == "pgd") return AttackKind::pgd;
  if (name == "cw_l2") return AttackKind::cw_l2;
  if (name == "cw_linf") return AttackKind::cw_linf;
  throw std::invalid_argument("unknown attack '" + std::string(name) + "' (expected fgsm, pgd, cw_l2 or cw_linf)");
}

bool is_linf(AttackKind kind) { return kind != AttackKind::cw_l2; }

void AttackConfig::validate() const {
  if (is_linf(kind) && !(epsilon >= 0)) throw std::invalid_argument("attack: epsilon must be nonnegative");
  if (alpha && !(*alpha > 0)) throw std::invalid_argument("attack: alpha must be positive");
  if (kind == AttackKind::pgd && iterations == 0) throw std::invalid_argument("attack: iterations must be at least 1");
  if (!(delta >= 0)) throw std::invalid_argument("attack: delta must be nonnegative");
  if (!(c_init > 0)) throw std::invalid_argument("attack: c_init must be positive");
  if (!(cw_learning_rate > 0)) throw std::invalid_argument("attack: cw_learning_rate must be positive");
  if (!(clip_min < clip_max)) throw std::invalid_argument("attack: clip_min must be below clip_max");
}

double AttackConfig::cw_linf_learning_rate() const { return std::min(cw_learning_rate, epsilon / 10.0); }

LinearClassifier::LinearClassifier(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2 || bias_.rank() != 1 || bias_.dim(0) != weight_.dim(0))
    throw ShapeError("linear classifier expects weight [C, D] and bias [C]");
}

LinearClassifier LinearClassifier::binary(std::span<const double> w, double b) {
  std::vector<double> wd(2 * w.size(), 0.0);
  std::copy(w.begin(), w.end(), wd.begin() + static_cast<std::ptrdiff_t>(w.size()));
  return LinearClassifier(Tensor({2, w.size()}, std::move(wd)), Tensor({2}, {0.0, b}));
}

Var LinearClassifier::log_posteriors(Graph& g, Var inputs) const {
  return ops::log_softmax(ops::linear(inputs, g.constant_ref(weight_), g.constant_ref(bias_)));
}

namespace {

std::size_t strongest_rival(std::span<const double> scores, int target) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (static_cast<int>(j) == target) continue;
    if (best == std::numeric_limits<std::size_t>::max() || scores[j] > scores[best]) best = j;
  }
  return best;
}

void check_target(std::size_t n, int target) {
  if (n < 2) throw std::invalid_argument("cw objective needs at least two scores");
  if (target < 0 || static_cast<std::size_t>(target) >= n)
    throw std::out_of_range("class " + std::to_string(target) + " outside [0, " + std::to_string(n) + ")");
}

int argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

Perturbation make_perturbation(std::span<const double> x, std::span<const double> adv) {
  Perturbation p;
  p.eta.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p.eta[i] = adv[i] - x[i];
  p.linf = linf_norm(p.eta);
  p.l2 = l2_norm(p.eta);
  return p;
}

std::vector<double> log_posteriors_of(const Classifier& model, std::span<const double> x) {
  Graph g(false);
  Var in = g.constant(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())));
  const auto& lp = model.log_posteriors(g, in).value();
  return {lp.raw(), lp.raw() + lp.size()};
}

AttackResult finish(const Classifier& model, std::span<const double> x, int label, std::vector<double> adv,
                    int benign_prediction, std::size_t iterations) {
  AttackResult r;
  r.perturbation = make_perturbation(x, adv);
  r.perturbation.iterations = iterations;
  r.adversarial_prediction = argmax(log_posteriors_of(model, adv));
  r.perturbation.success = r.adversarial_prediction != label;
  r.benign_prediction = benign_prediction;
  r.adversarial = std::move(adv);
  return r;
}

// Gradient of c * g(x + eta) with respect to eta, plus the scores at x + eta.
struct CwEval {
  std::vector<double> grad;
  std::vector<double> scores;
  double g = 0.0;
};

CwEval cw_eval(const Classifier& model, std::span<const double> adv, int label, double delta) {
  Graph g(false);
  Var in = g.input(Tensor({1, adv.size()}, std::vector<double>(adv.begin(), adv.end())));
  Var lp = model.log_posteriors(g, in);
  Var obj = cw_objective(lp, label, delta);
  CwEval e;
  e.g = obj.value().item();
  e.scores.assign(lp.value().raw(), lp.value().raw() + lp.value().size());
  if (e.g > 0) {
    g.backward(obj);
    const Tensor grad = g.grad(in);
    e.grad.assign(grad.raw(), grad.raw() + grad.size());
  } else {
    e.grad.assign(adv.size(), 0.0);
  }
  return e;
}

// Adam on a flat vector, restarted every CW round.
struct VectorAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;
  VectorAdam(double rate, std::size_t n) : lr(rate), m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& x, const std::vector<double>& g) {
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t)), c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace

double cw_objective(std::span<const double> scores, int target, double delta) {
  check_target(scores.size(), target);
  const std::size_t j = strongest_rival(scores, target);
  return std::max(scores[static_cast<std::size_t>(target)] - scores[j] + delta, 0.0);
}

Var cw_objective(Var log_posteriors, int target, double delta) {
  const Tensor& lp = log_posteriors.value();
  if (lp.rank() != 2 || lp.dim(0) != 1) throw ShapeError("cw objective expects [1, C], got " + to_string(lp.shape()));
  check_target(lp.dim(1), target);
  const std::size_t j = strongest_rival(lp.data(), target);
  Var margin = ops::sub(ops::select(log_posteriors, static_cast<std::size_t>(target)), ops::select(log_posteriors, j));
  return ops::relu(ops::add_scalar(margin, delta));
}

InputGradient loss_gradient(const Classifier& model, std::span<const double> x, int label) {
  Graph g(false);
  Var in = g.input(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())));
  Var lp = model.log_posteriors(g, in);
  const int labels[1] = {label};
  Var loss = ops::nll_loss(lp, labels);
  g.backward(loss);
  const Tensor grad = g.grad(in);
  InputGradient out;
  out.grad.assign(grad.raw(), grad.raw() + grad.size());
  out.log_posteriors.assign(lp.value().raw(), lp.value().raw() + lp.value().size());
  out.loss = loss.value().item();
  return out;
}

double linf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::fabs(e));
  return m;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

AttackResult fgsm(const Classifier& model, std::span<const double> x, int label, double epsilon, double clip_min,
                  double clip_max) {
  const InputGradient lg = loss_gradient(model, x, label);
  std::vector<double> adv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) adv[i] = std::clamp(x[i] + epsilon * sign(lg.grad[i]), clip_min, clip_max);
  return finish(model, x, label, std::move(adv), argmax(lg.log_posteriors), 1);
}

AttackResult pgd(const Classifier& model, std::span<const double> x, int label, const AttackConfig& config,
                 const IterateObserver& observer) {
  config.validate();
  const double eps = config.epsilon, alpha = config.step_size();
  std::vector<double> adv(x.begin(), x.end());
  if (config.random_start) {
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> u(-eps, eps);
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = std::clamp(x[i] + u(rng), config.clip_min, config.clip_max);
  }
  int benign = -1;
  std::vector<double> origin_grad;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const std::vector<double>* grad = nullptr;
    InputGradient lg;
    if (config.gradient_at_origin) {
      if (origin_grad.empty()) {
        lg = loss_gradient(model, x, label);
        origin_grad = lg.grad;
        benign = argmax(lg.log_posteriors);
      }
      grad = &origin_grad;
    } else {
      lg = loss_gradient(model, adv, label);
      if (it == 1 && !config.random_start) benign = argmax(lg.log_posteriors);
      grad = &lg.grad;
    }
    for (std::size_t i = 0; i < adv.size(); ++i) {
      const double cand = std::clamp(adv[i] + alpha * sign((*grad)[i]), x[i] - eps, x[i] + eps);
      adv[i] = std::clamp(cand, config.clip_min, config.clip_max);
    }
    if (observer) observer(it, adv);
  }
  if (benign < 0) benign = argmax(log_posteriors_of(model, x));
  return finish(model, x, label, std::move(adv), benign, config.iterations);
}

AttackResult cw_l2(const Classifier& model, std::span<const double> x, int label, const AttackConfig& config) {
  config.validate();
  const std::size_t n = x.size();
  std::vector<double> best;
  double best_norm = std::numeric_limits<double>::infinity();
  std::vector<double> last(x.begin(), x.end());
  int benign = -1;
  double c = config.c_init, lower = 0.0, upper = std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  for (std::size_t round = 0; round < std::max<std::size_t>(config.c_search_steps, 1); ++round) {
    std::vector<double> eta(n, 0.0), adv(x.begin(), x.end());
    VectorAdam adam(config.cw_learning_rate, n);
    bool succeeded = false, settled = false;
    double best_obj = std::numeric_limits<double>::infinity();
    std::size_t since_improvement = 0;
    for (std::size_t it = 0; it <= config.cw_iterations; ++it) {
      const CwEval e = cw_eval(model, adv, label, config.delta);
      if (benign < 0) benign = argmax(e.scores);
      const double norm2 = [&] {
        double s = 0.0;
        for (double v : eta) s += v * v;
        return s;
      }();
      settled = argmax(e.scores) != label;
      if (settled) {
        succeeded = true;
        if (std::sqrt(norm2) < best_norm) {
          best_norm = std::sqrt(norm2);
          best = adv;
        }
      }
      const double obj = norm2 + c * e.g;
      if (obj < best_obj - 1e-12 * std::fabs(best_obj)) {
        best_obj = obj;
        since_improvement = 0;
      } else if (++since_improvement > config.cw_patience && config.cw_patience > 0 && succeeded) {
        break;
      }
      if (norm2 == 0.0 && e.g == 0.0) break;  // already past the margin at the clean input
      if (it == config.cw_iterations) break;
      std::vector<double> grad(n);
      for (std::size_t i = 0; i < n; ++i) grad[i] = 2.0 * eta[i] + c * e.grad[i];
      adam.step(eta, grad);
      for (std::size_t i = 0; i < n; ++i) {
        adv[i] = std::clamp(x[i] + eta[i], config.clip_min, config.clip_max);
        eta[i] = adv[i] - x[i];
      }
      ++used;
    }
    last = adv;
    // The search follows where the round ends up, not its transients: Adam's
    // first step has size lr per coordinate whatever c is, so an early crossing
    // says nothing about whether c is large enough.
    if (settled) {
      upper = std::min(upper, c);
      c = 0.5 * (lower + upper);
    } else {
      lower = std::max(lower, c);
      c = std::isinf(upper) ? 2.0 * c : 0.5 * (lower + upper);
    }
    if (best_norm == 0.0) break;
  }
  return finish(model, x, label, best.empty() ? std::move(last) : std::move(best), benign, used);
}

AttackResult cw_linf(const Classifier& model, std::span<const double> x, int label, const AttackConfig& config) {
  config.validate();
  const std::size_t n = x.size();
  const double eps = config.epsilon;
  double tau = eps, c = config.c_init;
  std::vector<double> eta(n, 0.0), adv(x.begin(), x.end()), best;
  double best_linf = std::numeric_limits<double>::infinity(), best_l2 = best_linf;
  int benign = -1;
  std::size_t used = 0;
  auto project = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      adv[i] = std::clamp(x[i] + std::clamp(eta[i], -eps, eps), config.clip_min, config.clip_max);
      eta[i] = adv[i] - x[i];
    }
  };
  for (std::size_t round = 0; round < std::max<std::size_t>(config.c_search_steps, 1); ++round) {
    VectorAdam adam(config.cw_linf_learning_rate(), n);
    bool succeeded = false;
    double best_obj = std::numeric_limits<double>::infinity();
    std::size_t since_improvement = 0;
    for (std::size_t it = 0; it <= config.cw_iterations; ++it) {
      const CwEval e = cw_eval(model, adv, label, config.delta);
      if (benign < 0) benign = argmax(e.scores);
      double penalty = 0.0;
      for (double v : eta) penalty += std::max(std::fabs(v) - tau, 0.0);
      if (argmax(e.scores) != label) {
        succeeded = true;
        const double li = linf_norm(eta), l2 = l2_norm(eta);
        if (li < best_linf || (li == best_linf && l2 < best_l2)) {
          best_linf = li;
          best_l2 = l2;
          best = adv;
        }
      }
      const double obj = c * e.g + penalty;
      if (obj < best_obj - 1e-12 * std::fabs(best_obj)) {
        best_obj = obj;
        since_improvement = 0;
      } else if (++since_improvement > config.cw_patience && config.cw_patience > 0 && succeeded) {
        break;
      }
      if (best_linf == 0.0) break;
      if (it == config.cw_iterations) break;
      std::vector<double> grad(n);
      for (std::size_t i = 0; i < n; ++i) grad[i] = c * e.grad[i] + (std::fabs(eta[i]) > tau ? sign(eta[i]) : 0.0);
      adam.step(eta, grad);
      project();
      ++used;
    }
    if (best_linf == 0.0) break;
    if (succeeded) {
      if (linf_norm(eta) < tau) tau *= 0.9;
    } else {
      c *= 2.0;
    }
  }
  return finish(model, x, label, best.empty() ? std::move(adv) : std::move(best), benign, used);
}

AttackResult run_attack(const Classifier& model, std::span<const double> x, int label, const AttackConfig& config) {
  switch (config.kind) {
    case AttackKind::fgsm:
      config.validate();
      return fgsm(model, x, label, config.epsilon, config.clip_min, config.clip_max);
    case AttackKind::pgd: return pgd(model, x, label, config);
    case AttackKind::cw_l2: return cw_l2(model, x, label, config);
    case AttackKind::cw_linf: return cw_linf(model, x, label, config);
  }
  throw std::invalid_argument("unknown attack kind");
}

std::uint64_t sample_seed(std::uint64_t base, std::size_t index) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

BatchAttackReport attack_batch(const Classifier& model, std::span<const std::vector<double>> waveforms,
                               std::span<const int> labels, const AttackConfig& config, std::size_t threads) {
  config.validate();
  if (waveforms.size() != labels.size()) throw std::invalid_argument("attack_batch: waveforms and labels differ in count");
  if (waveforms.empty()) throw std::invalid_argument("attack_batch: empty batch");
  BatchAttackReport report;
  report.results.resize(waveforms.size());
  report.errors.resize(waveforms.size());
  parallel_for(waveforms.size(), threads, [&](std::size_t i) {
    AttackConfig local = config;
    local.seed = sample_seed(config.seed, i);
    try {
      report.results[i] = run_attack(model, waveforms[i], labels[i], local);
    } catch (const std::exception& e) {
      report.errors[i] = e.what();
    }
  });
  std::size_t benign_ok = 0, adv_ok = 0, attacked = 0;
  for (std::size_t i = 0; i < waveforms.size(); ++i) {
    if (!report.errors[i].empty()) {
      ++report.failed_samples;
      continue;
    }
    ++attacked;
    benign_ok += report.results[i].benign_prediction == labels[i];
    adv_ok += report.results[i].adversarial_prediction == labels[i];
  }
  if (attacked > 0) {
    report.benign_accuracy = static_cast<double>(benign_ok) / static_cast<double>(attacked);
    report.adversarial_accuracy = static_cast<double>(adv_ok) / static_cast<double>(attacked);
  }
  return report;
}

BatchAttackReport attack_batch(const Classifier& model, const Dataset& data, const AttackConfig& config,
                               std::size_t threads) {
  const auto waves = data.waveforms();
  const auto labels = data.labels();
  return attack_batch(model, waves, labels, config, threads);
}

}  // namespace advspk
