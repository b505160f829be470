#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "advspk/frontend.hpp"

namespace advspk {

/// Returned by snr_db when the perturbation is exactly zero.
inline constexpr double kSnrCapDb = 200.0;

/// 10 log10(sum x^2 / sum (x~ - x)^2). Throws std::invalid_argument on length
/// mismatch or an all-zero reference.
double snr_db(std::span<const double> x, std::span<const double> x_tilde);

/// Root-mean-square difference of 10 log10 power spectra over frames and bins.
double lsd_db(std::span<const double> x, std::span<const double> x_tilde, const FrontendConfig& config = {});
double lsd_db(std::span<const double> x, std::span<const double> x_tilde, const Frontend& frontend);

struct QualityReport {
  double snr_db = 0.0;
  double lsd_db = 0.0;
  double linf_norm = 0.0;
  double l2_norm = 0.0;
};
QualityReport quality(std::span<const double> x, std::span<const double> x_tilde, const Frontend& frontend);

/// Fraction of predictions equal to labels; throws on empty or mismatched input.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Over the samples both attacks misclassify, the fraction whose wrong
/// predictions agree. Empty when no sample is misclassified by both.
std::optional<double> misclassification_similarity(std::span<const int> predictions_a, std::span<const int> predictions_b,
                                                   std::span<const int> labels);

struct SimilarityMatrix {
  std::size_t n = 0;
  std::vector<std::optional<double>> cells;  // n x n, row-major

  const std::optional<double>& at(std::size_t i, std::size_t j) const { return cells[i * n + j]; }
};
/// Pairwise similarity between the prediction vectors of several attacks. The
/// diagonal is 1 by definition, even for an attack with no misclassification.
SimilarityMatrix similarity_matrix(std::span<const std::vector<int>> predictions, std::span<const int> labels);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};
/// Population standard deviation; zero count yields zeros.
MeanStd mean_std(std::span<const double> values);

}  // namespace advspk
