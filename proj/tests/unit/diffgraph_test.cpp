#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "advspk/grad_check.hpp"
#include "advspk/graph.hpp"
#include "advspk/ops.hpp"
#include "advspk/parameters.hpp"
#include "primitive_cases.hpp"
#include "test_util.hpp"

using namespace advspk;
using advspk::testing::primitive_cases;
using advspk::testing::random_tensor;

TEST(Forward, SumOfVector) {
  Graph g;
  Var x = g.constant(Tensor({3}, {1, 2, 3}));
  EXPECT_EQ(ops::sum(x).value().item(), 6.0);
}

TEST(Forward, Relu) {
  Graph g;
  Var x = g.constant(Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(ops::relu(x).value(), Tensor({3}, {0, 0, 2}));
}

TEST(Forward, LogSoftmaxOfEqualLogits) {
  Graph g;
  Var x = g.constant(Tensor({1, 2}, {0, 0}));
  const Tensor y = ops::log_softmax(x).value();
  EXPECT_NEAR(y[0], -std::numbers::ln2, 1e-15);
  EXPECT_NEAR(y[1], -std::numbers::ln2, 1e-15);
}

TEST(Forward, ShapeMismatchNamesNodeAndShapes) {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({4, 2}));
  try {
    ops::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
    EXPECT_NE(msg.find("[4, 2]"), std::string::npos);
  }
}

TEST(Backward, SquareDerivative) {
  Graph g;
  Var x = g.input(Tensor({1}, {3.0}));
  g.backward(ops::sum(ops::square(x)));
  EXPECT_EQ(g.grad(x)[0], 6.0);
}

TEST(Backward, SumGivesOnes) {
  Graph g;
  Var x = g.input(Tensor({4}, {1, -2, 3, 0.5}));
  g.backward(ops::sum(x));
  EXPECT_EQ(g.grad(x), Tensor({4}, 1.0));
}

TEST(Backward, CrossEntropyIsSoftmaxMinusOneHot) {
  const Tensor logits({1, 2}, {1.0, 2.0});
  const std::vector<int> label{0};
  auto loss = [&](Graph& g, Var z) { return ops::nll_loss(ops::log_softmax(z), label); };

  Graph g;
  Var z = g.input(logits);
  g.backward(loss(g, z));
  const Tensor grad = g.grad(z);

  const double e0 = std::exp(1.0), e1 = std::exp(2.0);
  const double s0 = e0 / (e0 + e1), s1 = e1 / (e0 + e1);
  EXPECT_NEAR(grad[0], s0 - 1.0, 1e-12);
  EXPECT_NEAR(grad[1], s1, 1e-12);

  // Independent central differences with step 1e-5.
  auto value_at = [&](const Tensor& t) {
    Graph h(false);
    return loss(h, h.constant(t)).value().item();
  };
  for (std::size_t i = 0; i < 2; ++i) {
    Tensor up = logits, down = logits;
    up[i] += 1e-5;
    down[i] -= 1e-5;
    EXPECT_NEAR(grad[i], (value_at(up) - value_at(down)) / 2e-5, 1e-9);
  }
}

TEST(Backward, NonScalarRootThrows) {
  Graph g;
  Var x = g.input(Tensor({2}, {1, 2}));
  EXPECT_THROW(g.backward(ops::relu(x)), ShapeError);
}

TEST(Backward, RepeatedAfterZeroingIsIdempotent) {
  std::mt19937_64 rng(3);
  Graph g;
  Var x = g.input(random_tensor({2, 5}, rng));
  Var y = ops::sum(ops::square(ops::log_softmax(x)));
  g.backward(y);
  const Tensor first = g.grad(x);
  g.zero_grad();
  g.backward(y);
  EXPECT_EQ(first, g.grad(x));
}

TEST(Backward, DeterministicAcrossRuns) {
  std::mt19937_64 rng(11);
  const Tensor xin = random_tensor({2, 3, 12}, rng);
  const Tensor w = random_tensor({4, 3, 3}, rng);
  const Tensor b = random_tensor({4}, rng);
  auto run = [&] {
    Graph g;
    Var x = g.input(xin);
    Var y = ops::conv1d(x, g.constant(w), g.constant(b), 2, 1);
    y = ops::max_pool1d(ops::relu(y), 2);
    g.backward(ops::sum(ops::square(y)));
    return g.grad(x);
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, GradientOfSumIsSumOfGradients) {
  std::mt19937_64 rng(5);
  const Tensor logits = random_tensor({4, 3}, rng);
  const std::vector<int> labels{0, 2, 1, 1};
  auto per_sample = [&](std::size_t i) {
    Graph g;
    Var z = g.input(logits);
    Var lp = ops::log_softmax(z);
    Var l = ops::scale(ops::select(lp, i * 3 + static_cast<std::size_t>(labels[i])), -1.0);
    g.backward(l);
    return g.grad(z);
  };
  Graph g;
  Var z = g.input(logits);
  g.backward(ops::scale(ops::nll_loss(ops::log_softmax(z), labels), 4.0));
  const Tensor total = g.grad(z);
  Tensor summed({4, 3}, 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor gi = per_sample(i);
    for (std::size_t k = 0; k < gi.size(); ++k) summed[k] += gi[k];
  }
  for (std::size_t k = 0; k < total.size(); ++k) EXPECT_NEAR(total[k], summed[k], 1e-12);
}

TEST(GradCheck, LinearFunctionIsExact) {
  std::mt19937_64 rng(1);
  const Tensor w = random_tensor({1, 6}, rng);
  auto f = [&](Graph& g, Var x) { return ops::sum(ops::matmul(g.constant(w), x)); };
  const auto report = grad_check(f, random_tensor({6, 1}, rng), {.step = 1e-5, .tolerance = 1e-10});
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

TEST(GradCheck, ReluAwayFromKink) {
  const Tensor point({5}, {-0.8, -0.3, 0.2, 0.6, 1.1});
  auto f = [](Graph&, Var x) { return ops::sum(ops::square(ops::relu(x))); };
  const auto report = grad_check(f, point, {.step = 1e-5, .tolerance = 1e-6});
  EXPECT_TRUE(report.passed) << report.max_relative_error;
}

TEST(GradCheck, ReportsFailureForWrongGradient) {
  // A rule that drops the gradient entirely must be caught.
  auto f = [](Graph& g, Var x) {
    Tensor v = x.value();
    Var broken = g.record("broken", v, {x}, [](const Tensor&, std::span<Tensor* const>) {});
    return ops::sum(ops::square(broken));
  };
  const auto report = grad_check(f, Tensor({3}, {0.5, 1.0, -2.0}));
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_relative_error, 0.5);
}

TEST(PrimitiveGradients, EveryPrimitivePassesAtRandomPoints) {
  std::mt19937_64 rng(2024);
  const auto cases = primitive_cases(rng);
  for (const auto& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Tensor point = random_tensor(c.input_shape, rng);
      while (!c.admissible(point)) point = random_tensor(c.input_shape, rng);
      const auto report = grad_check(c.fn, point, {.step = 1e-5, .tolerance = 1e-4});
      worst = std::max(worst, report.max_relative_error);
      ASSERT_TRUE(report.passed) << c.name << " trial " << trial << " rel err " << report.max_relative_error
                                 << " at " << report.worst_index << " analytic " << report.worst_analytic
                                 << " numeric " << report.worst_numeric;
    }
    RecordProperty(c.name, std::to_string(worst));
  }
}

TEST(Parameters, NamesAreUnique) {
  Parameters p;
  p.add("w", Tensor({2}));
  EXPECT_THROW(p.add("w", Tensor({3})), std::invalid_argument);
}

TEST(Parameters, UntrainableEntriesReceiveNoGradient) {
  Parameters p;
  p.add("a", Tensor({2}, {1.0, 2.0}), true);
  p.add("b", Tensor({2}, {3.0, 4.0}), false);
  Graph g;
  Var y = ops::sum(ops::mul(g.parameter(p, "a"), g.parameter(p, "b")));
  g.backward(y);
  const auto grads = g.parameter_grads();
  ASSERT_EQ(grads.count("a"), 1u);
  EXPECT_EQ(grads.count("b"), 0u);
  EXPECT_EQ(grads.at("a"), Tensor({2}, {3.0, 4.0}));
}

TEST(Parameters, CheckpointRoundTripIsBitExact) {
  std::mt19937_64 rng(8);
  Parameters p;
  p.add("conv.weight", random_tensor({4, 3, 5}, rng));
  p.add("bn.running_var", random_tensor({4}, rng, 0.1, 2.0), false);
  p.add("head.bias", random_tensor({7}, rng));

  std::stringstream first;
  write_parameters(first, p);
  Parameters loaded = read_parameters(first);

  Parameters expected = p;
  quantize_to_f32(expected);
  EXPECT_TRUE(loaded == expected);
  EXPECT_FALSE(loaded.at("bn.running_var").trainable);

  std::stringstream again;
  write_parameters(again, loaded);
  EXPECT_EQ(first.str(), again.str());
}

TEST(Parameters, RejectsForeignOrTruncatedFiles) {
  std::stringstream junk("not a checkpoint at all");
  EXPECT_THROW(read_parameters(junk), FormatError);

  Parameters p;
  p.add("w", Tensor({16}, 0.25));
  std::stringstream full;
  write_parameters(full, p);
  std::string bytes = full.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 9));
  EXPECT_THROW(read_parameters(cut), FormatError);
}
