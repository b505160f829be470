#include "advspk/frontend.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <stdexcept>

#include "advspk/ops.hpp"

namespace advspk {

void FrontendConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("frontend config: " + what); };
  if (sample_rate <= 0) fail("sample_rate must be positive");
  if (frame_length == 0) fail("frame_length must be positive");
  if (hop_length == 0) fail("hop_length must be positive");
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) fail("fft_size must be a power of two >= 2");
  if (frame_length > fft_size) fail("frame_length must not exceed fft_size");
  if (n_mels < 1) fail("n_mels must be >= 1");
  if (!(fmin >= 0.0) || !(fmin < fmax)) fail("require 0 <= fmin < fmax");
  if (fmax > sample_rate / 2.0) fail("fmax must not exceed sample_rate / 2");
  if (!(log_floor > 0.0)) fail("log_floor must be positive");
}

std::size_t FrontendConfig::n_frames(std::size_t length) const {
  if (length < frame_length) {
    throw std::invalid_argument("frontend: waveform of " + std::to_string(length) +
                                " samples is shorter than frame_length " + std::to_string(frame_length));
  }
  return 1 + (length - frame_length) / hop_length;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank build_filterbank(const FrontendConfig& config) {
  config.validate();
  MelFilterbank fb;
  fb.n_mels = config.n_mels;
  fb.n_bins = config.n_bins();
  fb.weights.assign(fb.n_mels * fb.n_bins, 0.0);
  fb.begin.assign(fb.n_mels, 0);
  fb.end.assign(fb.n_mels, 0);

  const double lo = hz_to_mel(config.fmin), hi = hz_to_mel(config.fmax);
  std::vector<double> points(config.n_mels + 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(config.n_mels + 1);
  }
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    const double left = points[m], center = points[m + 1], right = points[m + 2];
    fb.center_hz.push_back(mel_to_hz(center));
    bool seen = false;
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      const double hz = static_cast<double>(k) * config.sample_rate / static_cast<double>(config.fft_size);
      const double mel = hz_to_mel(hz);
      const double w = std::max(0.0, std::min((mel - left) / (center - left), (right - mel) / (right - center)));
      fb.weights[m * fb.n_bins + k] = w;
      if (w > 0.0) {
        if (!seen) fb.begin[m] = k;
        fb.end[m] = k + 1;
        seen = true;
      }
    }
  }
  return fb;
}

Fft::Fft(std::size_t size) : size_(size) {
  if (size < 1 || (size & (size - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < size) ++bits;
  bitrev_.resize(size);
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }
  twiddles_.resize(size / 2);
  for (std::size_t k = 0; k < size / 2; ++k) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(size);
    twiddles_[k] = {std::cos(a), std::sin(a)};
  }
}

void Fft::forward(std::span<std::complex<double>> data) const {
  if (data.size() != size_) throw std::invalid_argument("fft: buffer size mismatch");
  for (std::size_t i = 0; i < size_; ++i)
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  for (std::size_t len = 2; len <= size_; len <<= 1) {
    const std::size_t half = len / 2, stride = size_ / len;
    for (std::size_t start = 0; start < size_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const std::complex<double> t = twiddles_[j * stride] * data[start + j + half];
        data[start + j + half] = data[start + j] - t;
        data[start + j] += t;
      }
    }
  }
}

Frontend::Frontend(FrontendConfig config)
    : config_(config),
      filterbank_(build_filterbank(config)),
      half_fft_(config.fft_size / 2),
      window_(config.frame_length),
      twiddles_(config.fft_size / 2 + 1) {
  const double len = static_cast<double>(config_.frame_length);
  for (std::size_t k = 0; k < twiddles_.size(); ++k) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(config_.fft_size);
    twiddles_[k] = {std::cos(a), std::sin(a)};
  }
  for (std::size_t n = 0; n < window_.size(); ++n) {
    window_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / len);
  }
}

Var Frontend::power_spectrogram(Var waveforms) const {
  if (waveforms.shape().size() != 2) {
    throw ShapeError("power_spectrogram: expected waveforms [B, N], got " + to_string(waveforms.shape()));
  }
  const std::size_t batch = waveforms.shape()[0], length = waveforms.shape()[1];
  const std::size_t frames = config_.n_frames(length);
  const std::size_t nbins = config_.n_bins(), flen = config_.frame_length, hop = config_.hop_length;
  const std::size_t half = config_.fft_size / 2;
  const std::size_t total = batch * frames;
  const Tensor& x = waveforms.value();

  auto spectra = std::make_shared<std::vector<std::complex<double>>>(total * nbins);
  Tensor power({batch, frames, nbins});
  std::vector<std::complex<double>> buf(half);
  std::vector<double> frame(config_.fft_size, 0.0);

  // Each frame is transformed on its own (real FFT through a half-size complex
  // transform), so a frame's spectrum depends only on its own samples.
  for (std::size_t p = 0; p < total; ++p) {
    const double* src = x.raw() + (p / frames) * length + (p % frames) * hop;
    for (std::size_t n = 0; n < flen; ++n) frame[n] = window_[n] * src[n];
    for (std::size_t m = 0; m < half; ++m) buf[m] = {frame[2 * m], frame[2 * m + 1]};
    half_fft_.forward(buf);
    for (std::size_t k = 0; k < nbins; ++k) {
      const std::complex<double> zk = buf[k % half];
      const std::complex<double> zc = std::conj(buf[(half - k % half) % half]);
      const std::complex<double> even = 0.5 * (zk + zc);
      const std::complex<double> odd = std::complex<double>(0.0, -0.5) * (zk - zc);
      const std::complex<double> xk = k == half ? even - odd : even + twiddles_[k] * odd;
      (*spectra)[p * nbins + k] = xk;
      power[p * nbins + k] = std::norm(xk);
    }
  }

  return waveforms.graph().record(
      "power_spectrogram", std::move(power), {waveforms},
      [this, spectra, batch, length, frames, nbins, flen, hop, half](const Tensor& g, std::span<Tensor* const> pg) {
        const std::size_t total = batch * frames;
        std::vector<std::complex<double>> h(nbins), buf(half);
        // dP_k/ds_n = 2 Re(X_k e^{+i 2 pi k n / N}). Summed over bins this is the
        // unnormalized inverse DFT of the Hermitian spectrum H_k = G_k X_k
        // (doubled at DC and Nyquist), evaluated through a half-size transform:
        // even samples from H_k + H_{k+M}, odd from (H_k - H_{k+M}) e^{+i 2 pi k / N}.
        for (std::size_t p = 0; p < total; ++p) {
          for (std::size_t k = 0; k < nbins; ++k) {
            const double scale = (k == 0 || k == half) ? 2.0 : 1.0;
            h[k] = scale * g[p * nbins + k] * (*spectra)[p * nbins + k];
          }
          for (std::size_t k = 0; k < half; ++k) {
            const std::complex<double> upper = std::conj(h[half - k]);
            const std::complex<double> even = h[k] + upper;
            const std::complex<double> odd = (h[k] - upper) * std::conj(twiddles_[k]);
            buf[k] = std::conj(even + std::complex<double>(0.0, 1.0) * odd);
          }
          half_fft_.forward(buf);
          double* dst = pg[0]->raw() + (p / frames) * length + (p % frames) * hop;
          for (std::size_t n = 0; n < flen; ++n) {
            const std::complex<double> z = std::conj(buf[n / 2]);
            dst[n] += window_[n] * ((n % 2 == 0) ? z.real() : z.imag());
          }
        }
      });
}

Var Frontend::mel_project(Var power) const {
  const auto& s = power.shape();
  if (s.size() != 3 || s[2] != filterbank_.n_bins) {
    throw ShapeError("mel_project: expected power [B, frames, " + std::to_string(filterbank_.n_bins) + "], got " +
                     to_string(s));
  }
  const std::size_t batch = s[0], frames = s[1], nbins = s[2], nmels = filterbank_.n_mels;
  const Tensor& p = power.value();
  Tensor y({batch, nmels, frames});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t m = 0; m < nmels; ++m) {
      const double* w = filterbank_.weights.data() + m * nbins;
      for (std::size_t f = 0; f < frames; ++f) {
        const double* row = p.raw() + (b * frames + f) * nbins;
        double acc = 0.0;
        for (std::size_t k = filterbank_.begin[m]; k < filterbank_.end[m]; ++k) acc += w[k] * row[k];
        y[(b * nmels + m) * frames + f] = acc;
      }
    }
  return power.graph().record("mel_project", std::move(y), {power},
                              [this, batch, frames, nbins, nmels](const Tensor& g, std::span<Tensor* const> pg) {
                                for (std::size_t b = 0; b < batch; ++b)
                                  for (std::size_t m = 0; m < nmels; ++m) {
                                    const double* w = filterbank_.weights.data() + m * nbins;
                                    for (std::size_t f = 0; f < frames; ++f) {
                                      const double gv = g[(b * nmels + m) * frames + f];
                                      double* row = pg[0]->raw() + (b * frames + f) * nbins;
                                      for (std::size_t k = filterbank_.begin[m]; k < filterbank_.end[m]; ++k)
                                        row[k] += w[k] * gv;
                                    }
                                  }
                              });
}

Var Frontend::log_mel(Var waveforms) const {
  return ops::log_offset(mel_project(power_spectrogram(waveforms)), config_.log_floor);
}

Tensor Frontend::log_mel(std::span<const double> waveform) const {
  Graph g(false);
  Var x = g.constant(Tensor({1, waveform.size()}, std::vector<double>(waveform.begin(), waveform.end())));
  Tensor out = log_mel(x).value();
  return out.reshaped({out.dim(1), out.dim(2)});
}

Tensor Frontend::power_spectrogram(std::span<const double> waveform) const {
  Graph g(false);
  Var x = g.constant(Tensor({1, waveform.size()}, std::vector<double>(waveform.begin(), waveform.end())));
  Tensor out = power_spectrogram(x).value();
  return out.reshaped({out.dim(1), out.dim(2)});
}

void write_spectrogram_csv(const std::filesystem::path& path, const Tensor& log_mel, const FrontendConfig& config) {
  if (log_mel.rank() != 2) throw ShapeError("spectrogram csv: expected [n_mels, n_frames], got " + to_string(log_mel.shape()));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("spectrogram csv: cannot open " + path.string());
  out << std::setprecision(17);
  const std::size_t rows = log_mel.dim(0), cols = log_mel.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out << ',';
      out << log_mel[r * cols + c];
    }
    out << '\n';
  }
  std::ofstream header(path.string() + ".header.txt");
  if (!header) throw std::runtime_error("spectrogram csv: cannot write header for " + path.string());
  header << std::setprecision(17) << "rows=mel_channels\ncolumns=frames\n"
         << "sample_rate=" << config.sample_rate << "\nframe_length=" << config.frame_length
         << "\nhop_length=" << config.hop_length << "\nfft_size=" << config.fft_size << "\nn_mels=" << config.n_mels
         << "\nfmin=" << config.fmin << "\nfmax=" << config.fmax << "\nlog_floor=" << config.log_floor
         << "\nwindow=hann\nn_frames=" << cols << '\n';
}

}  // namespace advspk
