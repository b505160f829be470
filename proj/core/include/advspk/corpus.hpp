#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace advspk {

struct AudioSample {
  std::vector<double> waveform;  // mono, within [-1, 1]
  int sample_rate = 16000;
  int speaker_label = 0;
  std::string utterance_id;
};

enum class SplitTag { full, train, test };

struct Dataset {
  std::vector<AudioSample> samples;
  std::vector<std::string> vocabulary;  // speaker names, indexed by label
  SplitTag split = SplitTag::full;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t n_classes() const { return vocabulary.size(); }
  std::vector<int> labels() const;
  std::vector<std::vector<double>> waveforms() const;
  /// Throws std::invalid_argument on out-of-vocabulary labels, duplicate
  /// utterance ids, or samples outside [-1, 1].
  void validate() const;
};

struct VoiceParams {
  double f0_hz = 0.0;
  double formant1_hz = 0.0;
  double formant2_hz = 0.0;
  double noise_floor = 0.0;  // noise standard deviation relative to peak
};

struct SynthSpec {
  std::size_t n_speakers = 10;
  std::size_t utterances_per_speaker = 20;
  double duration_s = 2.0;
  int sample_rate = 16000;
  std::uint64_t seed = 1;
  /// Empty means voices are drawn from the seed.
  std::vector<VoiceParams> voices;

  void validate() const;
};

/// Voices drawn for spec.n_speakers speakers with F0s at least 20 Hz apart.
std::vector<VoiceParams> draw_voices(const SynthSpec& spec);
Dataset synth_corpus(const SynthSpec& spec);

/// 16-bit PCM mono WAV. Samples are rounded to int16 after scaling by 32768
/// and saturated.
void write_wav(const std::filesystem::path& path, std::span<const double> waveform, int sample_rate);
void write_wav_pcm(const std::filesystem::path& path, std::span<const std::int16_t> pcm, int sample_rate);
struct WavData {
  std::vector<std::int16_t> pcm;
  int sample_rate = 0;
};
WavData read_wav_pcm(const std::filesystem::path& path);
/// Reads and rescales by 1/32768.
AudioSample read_wav(const std::filesystem::path& path);

/// root/<speaker>/<utterance>.wav; labels follow the lexicographic order of
/// speaker directory names. A nonzero expected_rate rejects other rates.
Dataset load_wav_dir(const std::filesystem::path& root, int expected_rate = 0);

/// Per-speaker split: floor(train_fraction * n) utterances of each speaker go
/// to train, clamped so both sides get at least one.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

}  // namespace advspk
