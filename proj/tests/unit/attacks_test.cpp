#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "advspk/attacks.hpp"
#include "advspk/corpus.hpp"
#include "test_util.hpp"

using namespace advspk;
using advspk::testing::random_vector;
using advspk::testing::tiny_cnn;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

struct Toy {
  std::vector<double> w;
  double b;
  LinearClassifier model;
};

Toy linear_toy(std::size_t dim, std::mt19937_64& rng) {
  auto w = random_vector(dim, rng);
  const double b = std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
  return {w, b, LinearClassifier::binary(w, b)};
}

// Label of the side of the hyperplane x lies on; logits are [0, w.x + b].
int toy_label(const Toy& t, std::span<const double> x) { return dot(t.w, x) + t.b > 0 ? 1 : 0; }

Dataset speech_like(std::size_t speakers, std::size_t utts) {
  SynthSpec s;
  s.n_speakers = speakers;
  s.utterances_per_speaker = utts;
  s.duration_s = 0.15;
  s.seed = 9;
  return synth_corpus(s);
}

}  // namespace

TEST(CwObjective, ReferenceValues) {
  const double a[] = {2.0, 1.0};
  EXPECT_DOUBLE_EQ(cw_objective(a, 0, 0.0), 1.0);
  EXPECT_EQ(cw_objective(a, 1, 0.0), 0.0);
  const double b[] = {0.5, 0.5, 0.1};
  EXPECT_DOUBLE_EQ(cw_objective(b, 0, 0.2), 0.2);
  EXPECT_THROW(cw_objective(a, 2, 0.0), std::out_of_range);
  const double one[] = {1.0};
  EXPECT_ANY_THROW(cw_objective(one, 0, 0.0));
}

TEST(CwObjective, DifferentiableFormAgrees) {
  Graph g;
  const Var s = g.input(Tensor({1, 3}, {0.5, 0.7, 0.1}));
  const Var v = cw_objective(s, 0, 0.5);
  EXPECT_DOUBLE_EQ(v.value()[0], 0.3);
  g.backward(v);
  EXPECT_EQ(g.grad(s)[0], 1.0);
  EXPECT_EQ(g.grad(s)[1], -1.0);
  EXPECT_EQ(g.grad(s)[2], 0.0);
}

TEST(Fgsm, ZeroEpsilonReturnsInput) {
  std::mt19937_64 rng(1);
  const Model m = tiny_cnn(3, 2);
  const auto x = random_vector(1600, rng, -0.3, 0.3);
  const AttackResult r = fgsm(m, x, 1, 0.0);
  EXPECT_EQ(r.adversarial, x);
  EXPECT_EQ(r.perturbation.linf, 0.0);
}

TEST(Fgsm, LinearModelStepsAlongSignOfWeights) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Toy t = linear_toy(32, rng);
    const auto x = random_vector(32, rng, -0.5, 0.5);
    const double eps = 0.01;
    // Label 0: the loss log(1 + exp(w.x + b)) increases along w.
    const AttackResult r = fgsm(t.model, x, 0, eps);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(r.adversarial[i], x[i] + eps * sign(t.w[i])) << i;
  }
}

TEST(Fgsm, ClampingKeepsValidRange) {
  const std::vector<double> w = {1.0, -1.0};
  const auto m = LinearClassifier::binary(w, 0.0);
  const std::vector<double> x = {0.999, -0.999};
  const AttackResult r = fgsm(m, x, 0, 0.01);
  EXPECT_EQ(r.adversarial[0], 1.0);
  EXPECT_EQ(r.adversarial[1], -1.0);
  EXPECT_LE(r.perturbation.linf, 0.01);
}

TEST(Pgd, SingleFullStepEqualsFgsm) {
  std::mt19937_64 rng(3);
  const Model cnn = tiny_cnn(3, 4);
  for (int trial = 0; trial < 100; ++trial) {
    const double eps = std::uniform_real_distribution<double>(0.0005, 0.01)(rng);
    AttackConfig c;
    c.kind = AttackKind::pgd;
    c.epsilon = eps;
    c.alpha = eps;
    c.iterations = 1;
    std::vector<double> x;
    AttackResult a, b;
    if (trial % 4 == 0) {
      x = random_vector(1500, rng, -0.4, 0.4);
      a = fgsm(cnn, x, trial % 3, eps);
      b = pgd(cnn, x, trial % 3, c);
    } else {
      const Toy t = linear_toy(24, rng);
      x = random_vector(24, rng, -0.9, 0.9);
      a = fgsm(t.model, x, trial % 2, eps);
      b = pgd(t.model, x, trial % 2, c);
    }
    EXPECT_EQ(a.adversarial, b.adversarial) << "trial " << trial;
    EXPECT_EQ(a.adversarial_prediction, b.adversarial_prediction);
  }
}

TEST(Pgd, EveryIterateStaysInsideTheBall) {
  std::mt19937_64 rng(4);
  const Model m = tiny_cnn(3, 5);
  auto x = random_vector(1500, rng, -0.3, 0.3);
  x[0] = 1.0;  // valid-range clamp active at one coordinate
  AttackConfig c;
  c.kind = AttackKind::pgd;
  c.epsilon = 0.004;
  c.iterations = 15;
  c.random_start = true;
  c.seed = 17;
  std::size_t seen = 0;
  pgd(m, x, 0, c, [&](std::size_t i, std::span<const double> it) {
    EXPECT_EQ(i, ++seen);
    for (std::size_t k = 0; k < x.size(); ++k) {
      EXPECT_LE(std::fabs(it[k] - x[k]), c.epsilon + 1e-9);
      EXPECT_LE(it[k], 1.0);
      EXPECT_GE(it[k], -1.0);
    }
  });
  EXPECT_EQ(seen, 15u);
}

TEST(Pgd, LossNeverDecreasesOnLinearToy) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Toy t = linear_toy(16, rng);
    const auto x = random_vector(16, rng, -0.5, 0.5);
    const int y = toy_label(t, x);
    AttackConfig c;
    c.kind = AttackKind::pgd;
    c.epsilon = 0.05;
    c.iterations = 30;
    double prev = loss_gradient(t.model, x, y).loss;
    pgd(t.model, x, y, c, [&](std::size_t, std::span<const double> it) {
      const double cur = loss_gradient(t.model, it, y).loss;
      EXPECT_GE(cur, prev - 1e-9);
      prev = cur;
    });
  }
}

TEST(Pgd, IteratesFormAPrefixSequence) {
  std::mt19937_64 rng(6);
  const Model m = tiny_cnn(3, 6);
  const auto x = random_vector(1500, rng, -0.3, 0.3);
  AttackConfig c;
  c.kind = AttackKind::pgd;
  c.epsilon = 0.003;
  c.iterations = 12;
  std::vector<std::vector<double>> iterates;
  pgd(m, x, 2, c, [&](std::size_t, std::span<const double> it) { iterates.emplace_back(it.begin(), it.end()); });
  c.iterations = 5;
  EXPECT_EQ(pgd(m, x, 2, c).adversarial, iterates[4]);
}

TEST(CwL2, AlreadyMisclassifiedNeedsNoPerturbation) {
  std::mt19937_64 rng(7);
  const Toy t = linear_toy(16, rng);
  const auto x = random_vector(16, rng, -0.5, 0.5);
  AttackConfig c;
  c.kind = AttackKind::cw_l2;
  const AttackResult r = cw_l2(t.model, x, 1 - toy_label(t, x), c);
  EXPECT_EQ(r.perturbation.l2, 0.0);
  EXPECT_TRUE(r.perturbation.success);
}

TEST(CwL2, MatchesPointToHyperplaneDistance) {
  std::mt19937_64 rng(8);
  AttackConfig c;
  c.kind = AttackKind::cw_l2;
  for (int trial = 0; trial < 50; ++trial) {
    const Toy t = linear_toy(16, rng);
    const auto x = random_vector(16, rng, -0.3, 0.3);
    const double distance = std::fabs(dot(t.w, x) + t.b) / std::sqrt(dot(t.w, t.w));
    const AttackResult r = cw_l2(t.model, x, toy_label(t, x), c);
    ASSERT_TRUE(r.perturbation.success) << "trial " << trial;
    EXPECT_NEAR(r.perturbation.l2, distance, 0.1 * distance) << "trial " << trial;
  }
}

TEST(CwLinf, AlreadyMisclassifiedNeedsNoPerturbation) {
  std::mt19937_64 rng(9);
  const Toy t = linear_toy(16, rng);
  const auto x = random_vector(16, rng, -0.5, 0.5);
  AttackConfig c;
  c.kind = AttackKind::cw_linf;
  const AttackResult r = cw_linf(t.model, x, 1 - toy_label(t, x), c);
  EXPECT_EQ(r.perturbation.linf, 0.0);
  EXPECT_TRUE(r.perturbation.success);
}

TEST(CwLinf, RespectsEpsilonBound) {
  std::mt19937_64 rng(10);
  const Model m = tiny_cnn(3, 7);
  AttackConfig c;
  c.kind = AttackKind::cw_linf;
  c.epsilon = 0.002;
  c.cw_iterations = 60;
  c.c_search_steps = 3;
  for (int trial = 0; trial < 4; ++trial) {
    const auto x = random_vector(1500, rng, -0.3, 0.3);
    const AttackResult r = cw_linf(m, x, trial % 3, c);
    EXPECT_LE(r.perturbation.linf, c.epsilon + 1e-9);
    for (double v : r.adversarial) EXPECT_LE(std::fabs(v), 1.0);
  }
}

TEST(Attacks, SuccessFlagMatchesRePrediction) {
  std::mt19937_64 rng(11);
  const Model m = tiny_cnn(3, 8);
  for (AttackKind kind : {AttackKind::fgsm, AttackKind::pgd, AttackKind::cw_l2, AttackKind::cw_linf}) {
    AttackConfig c;
    c.kind = kind;
    c.epsilon = 0.01;
    c.iterations = 5;
    c.cw_iterations = 40;
    c.c_search_steps = 2;
    for (int trial = 0; trial < 3; ++trial) {
      const auto x = random_vector(1500, rng, -0.3, 0.3);
      const AttackResult r = run_attack(m, x, trial, c);
      const std::vector<std::vector<double>> batch = {r.adversarial};
      EXPECT_EQ(r.perturbation.success, predict(m, batch)[0] != trial) << to_string(kind);
      EXPECT_EQ(r.adversarial_prediction, predict(m, batch)[0]);
    }
  }
}

TEST(Attacks, RecordedNormsMatchPerturbation) {
  std::mt19937_64 rng(12);
  const Model m = tiny_cnn(3, 9);
  AttackConfig c;
  c.kind = AttackKind::pgd;
  c.epsilon = 0.003;
  c.iterations = 4;
  const auto x = random_vector(1500, rng, -0.3, 0.3);
  const AttackResult r = pgd(m, x, 1, c);
  double l2 = 0.0, linf = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(r.perturbation.eta[i], r.adversarial[i] - x[i]);
    l2 += r.perturbation.eta[i] * r.perturbation.eta[i];
    linf = std::max(linf, std::fabs(r.perturbation.eta[i]));
  }
  EXPECT_NEAR(r.perturbation.l2, std::sqrt(l2), 1e-9);
  EXPECT_NEAR(r.perturbation.linf, linf, 1e-9);
}

TEST(AttackConfig, ValidationAndNames) {
  AttackConfig c;
  c.epsilon = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.kind = AttackKind::pgd;
  c.iterations = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(AttackConfig{}.step_size(), 0.002 / 5);
  for (AttackKind k : {AttackKind::fgsm, AttackKind::pgd, AttackKind::cw_l2, AttackKind::cw_linf})
    EXPECT_EQ(parse_attack_kind(to_string(k)), k);
  EXPECT_ANY_THROW(parse_attack_kind("deepfool"));
}

TEST(AttackBatch, ZeroEpsilonKeepsBenignAccuracy) {
  const Dataset d = speech_like(3, 4);
  const Model m = tiny_cnn(3, 10);
  AttackConfig c;
  c.epsilon = 0.0;
  const auto r = attack_batch(m, d, c, 2);
  EXPECT_EQ(r.failed_samples, 0u);
  EXPECT_EQ(r.adversarial_accuracy, r.benign_accuracy);
}

TEST(AttackBatch, AttacksNeverHelpAnUntrainedModel) {
  const Dataset d = speech_like(2, 6);
  const Model m = tiny_cnn(2, 11);
  AttackConfig c;
  c.kind = AttackKind::pgd;
  c.epsilon = 0.005;
  c.iterations = 5;
  const auto r = attack_batch(m, d, c, 1);
  EXPECT_LE(r.adversarial_accuracy, r.benign_accuracy);
}

TEST(AttackBatch, DeterministicAcrossThreadCounts) {
  const Dataset d = speech_like(3, 3);
  const Model m = tiny_cnn(3, 12);
  AttackConfig c;
  c.kind = AttackKind::pgd;
  c.epsilon = 0.004;
  c.iterations = 3;
  c.random_start = true;
  c.seed = 5;
  const auto a = attack_batch(m, d, c, 1);
  const auto b = attack_batch(m, d, c, 3);
  ASSERT_EQ(a.results.size(), b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) EXPECT_EQ(a.results[i].adversarial, b.results[i].adversarial);
  EXPECT_EQ(a.adversarial_accuracy, b.adversarial_accuracy);
  EXPECT_NE(sample_seed(5, 0), sample_seed(5, 1));
}

TEST(AttackBatch, PerSampleErrorsAreCollected) {
  Dataset d = speech_like(2, 3);
  const Model m = tiny_cnn(2, 13);
  d.samples[1].waveform.resize(10);  // shorter than the model minimum
  AttackConfig c;
  const auto r = attack_batch(m, d, c, 1);
  EXPECT_EQ(r.failed_samples, 1u);
  EXPECT_FALSE(r.errors[1].empty());
  EXPECT_TRUE(r.errors[0].empty());
  EXPECT_EQ(r.results.size(), d.size());
}
