#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advspk/graph.hpp"

namespace advspk {

struct FrontendConfig {
  int sample_rate = 16000;
  std::size_t frame_length = 400;  // 25 ms
  std::size_t hop_length = 160;    // 10 ms
  std::size_t fft_size = 512;
  std::size_t n_mels = 64;
  double fmin = 20.0;
  double fmax = 7600.0;
  double log_floor = 1e-6;

  /// Throws std::invalid_argument listing the first violated constraint.
  void validate() const;
  std::size_t n_bins() const { return fft_size / 2 + 1; }
  std::size_t n_frames(std::size_t length) const;

  friend bool operator==(const FrontendConfig&, const FrontendConfig&) = default;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters on the mel scale, stored densely with the nonzero bin
/// range of each row cached.
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  std::vector<double> weights;  // n_mels x n_bins, row-major
  std::vector<std::size_t> begin;
  std::vector<std::size_t> end;
  std::vector<double> center_hz;

  double at(std::size_t mel, std::size_t bin) const { return weights[mel * n_bins + bin]; }
};

MelFilterbank build_filterbank(const FrontendConfig& config);

/// In-place iterative radix-2 complex FFT of a fixed power-of-two size.
class Fft {
 public:
  explicit Fft(std::size_t size);
  std::size_t size() const { return size_; }
  void forward(std::span<std::complex<double>> data) const;

 private:
  std::size_t size_;
  std::vector<std::complex<double>> twiddles_;
  std::vector<std::size_t> bitrev_;
};

/// Differentiable log-mel front-end: framing, periodic Hann window, power DFT,
/// mel filterbank, log(. + log_floor). No pre-emphasis or normalization.
class Frontend {
 public:
  explicit Frontend(FrontendConfig config);

  const FrontendConfig& config() const { return config_; }
  const MelFilterbank& filterbank() const { return filterbank_; }
  std::span<const double> window() const { return window_; }

  /// [B, N] waveforms -> [B, n_frames, n_bins] power spectra.
  Var power_spectrogram(Var waveforms) const;
  /// [B, n_frames, n_bins] -> [B, n_mels, n_frames] mel energies.
  Var mel_project(Var power) const;
  /// [B, N] -> [B, n_mels, n_frames] log-mel features.
  Var log_mel(Var waveforms) const;

  /// Non-differentiable convenience for a single waveform: [n_mels, n_frames].
  Tensor log_mel(std::span<const double> waveform) const;
  /// Power spectra of a single waveform: [n_frames, n_bins].
  Tensor power_spectrogram(std::span<const double> waveform) const;

 private:
  FrontendConfig config_;
  MelFilterbank filterbank_;
  Fft half_fft_;
  std::vector<double> window_;
  std::vector<std::complex<double>> twiddles_;  // e^{-i 2 pi k / fft_size}
};

/// Writes a log-mel matrix as CSV (rows = mel channels, columns = frames) and
/// a sidecar "<path>.header.txt" with the front-end settings.
void write_spectrogram_csv(const std::filesystem::path& path, const Tensor& log_mel, const FrontendConfig& config);

}  // namespace advspk
