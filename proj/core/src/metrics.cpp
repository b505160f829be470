#include "advspk/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "advspk/attacks.hpp"

namespace advspk {

namespace {

void require_same_length(const char* op, std::size_t a, std::size_t b) {
  if (a != b)
    throw std::invalid_argument(std::string(op) + ": lengths differ (" + std::to_string(a) + " vs " + std::to_string(b) +
                                ")");
}

}  // namespace

double snr_db(std::span<const double> x, std::span<const double> x_tilde) {
  require_same_length("snr_db", x.size(), x_tilde.size());
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    signal += x[i] * x[i];
    const double d = x_tilde[i] - x[i];
    noise += d * d;
  }
  if (!(signal > 0)) throw std::invalid_argument("snr_db: reference signal has zero power");
  if (noise == 0.0) return kSnrCapDb;
  return std::min(kSnrCapDb, 10.0 * std::log10(signal / noise));
}

double lsd_db(std::span<const double> x, std::span<const double> x_tilde, const Frontend& frontend) {
  require_same_length("lsd_db", x.size(), x_tilde.size());
  const Tensor a = frontend.power_spectrogram(x);
  const Tensor b = frontend.power_spectrogram(x_tilde);
  const double floor = frontend.config().log_floor;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = 10.0 * (std::log10(b[i] + floor) - std::log10(a[i] + floor));
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

double lsd_db(std::span<const double> x, std::span<const double> x_tilde, const FrontendConfig& config) {
  return lsd_db(x, x_tilde, Frontend(config));
}

QualityReport quality(std::span<const double> x, std::span<const double> x_tilde, const Frontend& frontend) {
  require_same_length("quality", x.size(), x_tilde.size());
  std::vector<double> eta(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) eta[i] = x_tilde[i] - x[i];
  return {snr_db(x, x_tilde), lsd_db(x, x_tilde, frontend), linf_norm(eta), l2_norm(eta)};
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  require_same_length("accuracy", predictions.size(), labels.size());
  if (predictions.empty()) throw std::invalid_argument("accuracy: no predictions");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::optional<double> misclassification_similarity(std::span<const int> a, std::span<const int> b,
                                                   std::span<const int> labels) {
  require_same_length("misclassification_similarity", a.size(), labels.size());
  require_same_length("misclassification_similarity", b.size(), labels.size());
  std::size_t common = 0, agree = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (a[i] == labels[i] || b[i] == labels[i]) continue;
    ++common;
    agree += a[i] == b[i];
  }
  if (common == 0) return std::nullopt;
  return static_cast<double>(agree) / static_cast<double>(common);
}

SimilarityMatrix similarity_matrix(std::span<const std::vector<int>> predictions, std::span<const int> labels) {
  SimilarityMatrix m;
  m.n = predictions.size();
  m.cells.resize(m.n * m.n);
  for (std::size_t i = 0; i < m.n; ++i) {
    m.cells[i * m.n + i] = 1.0;
    for (std::size_t j = i + 1; j < m.n; ++j) {
      const auto s = misclassification_similarity(predictions[i], predictions[j], labels);
      m.cells[i * m.n + j] = s;
      m.cells[j * m.n + i] = s;
    }
  }
  return m;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  out.count = values.size();
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

}  // namespace advspk
