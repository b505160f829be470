#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "advspk/graph.hpp"

/// Differentiable primitives. Every op validates shapes and throws ShapeError
/// naming itself and the offending shapes.
namespace advspk::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

/// Sum of all elements, shape [1].
Var sum(Var a);
Var mean(Var a);
/// [B, N] -> [B]
Var row_sum(Var a);

/// Subgradient 0 at the kink.
Var relu(Var a);
/// Subgradient sign(a) with sign(0) = 0.
Var abs(Var a);
Var square(Var a);
/// log(a + offset); offset > 0 keeps the op finite at a = 0.
Var log_offset(Var a, double offset);
/// Gradient passes where lo <= a <= hi, zero outside.
Var clamp(Var a, double lo, double hi);
Var reshape(Var a, Shape shape);
/// Element at a flat index, shape [1].
Var select(Var a, std::size_t index);

/// [M, K] x [K, N] -> [M, N]
Var matmul(Var a, Var b);
/// Multiplies every row of x [B, I] by weight [O, I]^T and adds bias [O].
Var linear(Var x, Var weight, Var bias);
/// x [B, Cin, T], weight [Cout, Cin, K], bias [Cout]. Output length
/// T + 2*padding - dilation*(K-1).
Var conv1d(Var x, Var weight, Var bias, std::size_t dilation = 1, std::size_t padding = 0);
/// Non-overlapping max pooling over time, [B, C, T] -> [B, C, T / size].
/// Ties route the gradient to the lowest index.
Var max_pool1d(Var x, std::size_t size);
/// [B, C, T] -> [B, C]
Var mean_over_time(Var x);
/// [B, C, T] -> [B, 2C]: per-channel mean followed by standard deviation.
/// The deviation is sqrt(var + eps) - sqrt(eps), which is exactly 0 for
/// constant signals and has a finite gradient everywhere.
Var stats_pool(Var x, double eps = 1e-5);

struct BatchStats {
  Tensor mean;
  Tensor var;  // unbiased
};

/// Batch normalization over every axis except 1 for x of rank 2 ([B, C]) or
/// 3 ([B, C, T]), using batch statistics. The per-channel batch mean and
/// unbiased variance are written to stats when given.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps = 1e-5, BatchStats* stats = nullptr);
/// Batch normalization with fixed running statistics.
Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
                    double eps = 1e-5);

/// Row-wise log-softmax of [B, C].
Var log_softmax(Var logits);
/// Mean negative log-likelihood of labels under row log-probabilities [B, C].
Var nll_loss(Var log_probs, std::span<const int> labels);

}  // namespace advspk::ops
