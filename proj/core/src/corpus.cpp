#include "advspk/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

namespace advspk {

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.speaker_label);
  return out;
}

std::vector<std::vector<double>> Dataset::waveforms() const {
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.waveform);
  return out;
}

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.speaker_label < 0 || static_cast<std::size_t>(s.speaker_label) >= vocabulary.size())
      throw std::invalid_argument("utterance " + s.utterance_id + " has a label outside the vocabulary");
    if (!ids.insert(s.utterance_id).second) throw std::invalid_argument("duplicate utterance id " + s.utterance_id);
    for (double v : s.waveform)
      if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("utterance " + s.utterance_id + " leaves [-1, 1]");
  }
}

void SynthSpec::validate() const {
  if (n_speakers < 2) throw std::invalid_argument("synth: n_speakers must be at least 2");
  if (utterances_per_speaker == 0) throw std::invalid_argument("synth: utterances_per_speaker must be positive");
  if (!(duration_s > 0)) throw std::invalid_argument("synth: duration_s must be positive");
  if (sample_rate <= 0) throw std::invalid_argument("synth: sample_rate must be positive");
  if (!voices.empty()) {
    if (voices.size() != n_speakers) throw std::invalid_argument("synth: voices must list one entry per speaker");
    for (std::size_t i = 0; i < voices.size(); ++i) {
      const auto& v = voices[i];
      if (!(v.f0_hz > 0 && v.formant1_hz > 0 && v.formant2_hz > 0 && v.noise_floor >= 0))
        throw std::invalid_argument("synth: voice " + std::to_string(i) + " has a nonpositive frequency or negative noise");
      if (v.f0_hz >= 0.5 * sample_rate) throw std::invalid_argument("synth: F0 above Nyquist");
      for (std::size_t j = 0; j < i; ++j) {
        const auto& w = voices[j];
        if (v.f0_hz == w.f0_hz && v.formant1_hz == w.formant1_hz && v.formant2_hz == w.formant2_hz &&
            v.noise_floor == w.noise_floor)
          throw std::invalid_argument("synth: voices " + std::to_string(j) + " and " + std::to_string(i) + " coincide");
      }
    }
  }
}

std::vector<VoiceParams> draw_voices(const SynthSpec& spec) {
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  // F0 slots 24 Hz apart with at most 2 Hz of jitter keep neighbours >= 20 Hz apart.
  const std::size_t slots = spec.n_speakers + spec.n_speakers / 2 + 1;
  std::vector<double> f0(slots);
  for (std::size_t i = 0; i < slots; ++i) f0[i] = 90.0 + 24.0 * static_cast<double>(i);
  std::shuffle(f0.begin(), f0.end(), rng);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0), f1(300.0, 900.0), f2(1100.0, 2600.0),
      noise(0.0005, 0.002);
  std::vector<VoiceParams> voices(spec.n_speakers);
  for (std::size_t i = 0; i < spec.n_speakers; ++i) {
    voices[i].f0_hz = f0[i] + jitter(rng);
    voices[i].formant1_hz = f1(rng);
    voices[i].formant2_hz = f2(rng);
    voices[i].noise_floor = noise(rng);
  }
  return voices;
}

namespace {

constexpr double kFormantBandwidth1 = 90.0;
constexpr double kFormantBandwidth2 = 150.0;
constexpr double kVoicingBias = 0.3;
// Per-utterance relative jitter, standing in for prosody and phonetic content.
constexpr double kF0Jitter = 0.05;
constexpr double kFormantJitter = 0.15;

double resonance_gain(double hz, double formant1, double formant2) {
  auto peak = [&](double center, double bw) {
    const double d = (hz - center) / bw;
    return 1.0 / (1.0 + d * d);
  };
  return 0.15 + peak(formant1, kFormantBandwidth1) + 0.7 * peak(formant2, kFormantBandwidth2);
}

std::vector<double> synth_utterance(const VoiceParams& voice, std::size_t length, int rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double f0 = voice.f0_hz * (1.0 + kF0Jitter * (2.0 * unit(rng) - 1.0));
  const double formant1 = voice.formant1_hz * (1.0 + kFormantJitter * (2.0 * unit(rng) - 1.0));
  const double formant2 = voice.formant2_hz * (1.0 + kFormantJitter * (2.0 * unit(rng) - 1.0));
  const double am_rate = 2.0 + 3.0 * unit(rng);
  const double am_phase = 2.0 * std::numbers::pi * unit(rng);
  std::vector<double> x(length, 0.0);
  const double top = 0.475 * rate;
  for (std::size_t h = 1; h * f0 < top; ++h) {
    const double hz = static_cast<double>(h) * f0;
    // Source rolls off at 12 dB per octave.
    const double amp = resonance_gain(hz, formant1, formant2) / static_cast<double>(h * h);
    // Rotation recurrence: z_{n+1} = z_n * w.
    const std::complex<double> w = std::polar(1.0, 2.0 * std::numbers::pi * hz / rate);
    std::complex<double> z = std::polar(amp, 2.0 * std::numbers::pi * unit(rng));
    for (std::size_t n = 0; n < length; ++n) {
      x[n] += z.imag();
      z *= w;
    }
  }
  const std::complex<double> am_w = std::polar(1.0, 2.0 * std::numbers::pi * am_rate / rate);
  std::complex<double> am = std::polar(1.0, am_phase);
  double peak = 0.0;
  // Syllabic envelope: voiced bursts separated by pauses that hold only the noise floor.
  for (std::size_t n = 0; n < length; ++n) {
    x[n] *= std::max(am.imag() + kVoicingBias, 0.0) / (1.0 + kVoicingBias);
    am *= am_w;
    peak = std::max(peak, std::fabs(x[n]));
  }
  std::normal_distribution<double> noise(0.0, voice.noise_floor * peak);
  peak = 0.0;
  for (auto& v : x) {
    v += noise(rng);
    peak = std::max(peak, std::fabs(v));
  }
  const double gain = peak > 0 ? 0.9 / peak : 0.0;
  for (auto& v : x) v *= gain;
  return x;
}

}  // namespace

Dataset synth_corpus(const SynthSpec& spec) {
  spec.validate();
  const std::vector<VoiceParams> voices = spec.voices.empty() ? draw_voices(spec) : spec.voices;
  const auto length = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  if (length == 0) throw std::invalid_argument("synth: duration shorter than one sample");
  Dataset ds;
  for (std::size_t s = 0; s < spec.n_speakers; ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "spk%03zu", s);
    ds.vocabulary.emplace_back(name);
  }
  std::mt19937_64 rng(spec.seed);
  for (std::size_t s = 0; s < spec.n_speakers; ++s) {
    for (std::size_t u = 0; u < spec.utterances_per_speaker; ++u) {
      AudioSample a;
      a.sample_rate = spec.sample_rate;
      a.speaker_label = static_cast<int>(s);
      char id[64];
      std::snprintf(id, sizeof id, "%s/utt%04zu", ds.vocabulary[s].c_str(), u);
      a.utterance_id = id;
      a.waveform = synth_utterance(voices[s], length, spec.sample_rate, rng);
      ds.samples.push_back(std::move(a));
    }
  }
  return ds;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
void put_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}
std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

void write_wav_pcm(const std::filesystem::path& path, std::span<const std::int16_t> pcm, int sample_rate) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (auto s : pcm) put_u16(out, static_cast<std::uint16_t>(s));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_wav(const std::filesystem::path& path, std::span<const double> waveform, int sample_rate) {
  std::vector<std::int16_t> pcm(waveform.size());
  for (std::size_t i = 0; i < pcm.size(); ++i)
    pcm[i] = static_cast<std::int16_t>(std::clamp<long>(std::lround(waveform[i] * 32768.0), -32768, 32767));
  write_wav_pcm(path, pcm, sample_rate);
}

WavData read_wav_pcm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error(where + "not a RIFF/WAVE file");
  WavData wav;
  bool have_fmt = false, have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) throw std::runtime_error(where + "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw std::runtime_error(where + "fmt chunk too short");
      const std::uint16_t format = get_u16(chunk + 8), channels = get_u16(chunk + 10), bits = get_u16(chunk + 22);
      if (format != 1) throw std::runtime_error(where + "unsupported encoding " + std::to_string(format) + " (only PCM)");
      if (channels != 1) throw std::runtime_error(where + "expected mono, found " + std::to_string(channels) + " channels");
      if (bits != 16) throw std::runtime_error(where + "expected 16-bit samples, found " + std::to_string(bits));
      wav.sample_rate = static_cast<int>(get_u32(chunk + 12));
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error(where + "data chunk precedes fmt chunk");
      wav.pcm.resize(size / 2);
      for (std::size_t i = 0; i < wav.pcm.size(); ++i) wav.pcm[i] = static_cast<std::int16_t>(get_u16(chunk + 8 + 2 * i));
      have_data = true;
      break;
    }
    pos += 8 + size + (size & 1);
  }
  if (!have_fmt || !have_data) throw std::runtime_error(where + "missing fmt or data chunk");
  return wav;
}

AudioSample read_wav(const std::filesystem::path& path) {
  const WavData wav = read_wav_pcm(path);
  AudioSample s;
  s.sample_rate = wav.sample_rate;
  s.utterance_id = path.stem().string();
  s.waveform.resize(wav.pcm.size());
  for (std::size_t i = 0; i < wav.pcm.size(); ++i) s.waveform[i] = wav.pcm[i] / 32768.0;
  return s;
}

Dataset load_wav_dir(const std::filesystem::path& root, int expected_rate) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw std::runtime_error(root.string() + " is not a directory");
  std::vector<fs::path> speakers;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) speakers.push_back(e.path());
  std::sort(speakers.begin(), speakers.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (speakers.empty()) throw std::runtime_error(root.string() + " has no speaker directories");
  Dataset ds;
  int rate = expected_rate;
  for (std::size_t label = 0; label < speakers.size(); ++label) {
    const std::string name = speakers[label].filename().string();
    ds.vocabulary.push_back(name);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(speakers[label]))
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    if (files.empty()) throw std::runtime_error("speaker directory " + speakers[label].string() + " has no .wav files");
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      AudioSample s = read_wav(f);
      if (rate == 0) rate = s.sample_rate;
      if (s.sample_rate != rate)
        throw std::runtime_error(f.string() + ": sample rate " + std::to_string(s.sample_rate) + " differs from " +
                                 std::to_string(rate));
      s.speaker_label = static_cast<int>(label);
      s.utterance_id = name + "/" + f.stem().string();
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw std::invalid_argument("split: train_fraction must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) by_speaker[dataset.samples[i].speaker_label].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<char> to_train(dataset.samples.size(), 0);
  for (auto& [label, idx] : by_speaker) {
    if (idx.size() < 2)
      throw std::invalid_argument("split: speaker " + std::to_string(label) + " has fewer than 2 utterances");
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t k = 0; k < n_train; ++k) to_train[idx[k]] = 1;
  }
  Dataset train, test;
  train.vocabulary = test.vocabulary = dataset.vocabulary;
  train.split = SplitTag::train;
  test.split = SplitTag::test;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i)
    (to_train[i] ? train : test).samples.push_back(dataset.samples[i]);
  return {std::move(train), std::move(test)};
}

}  // namespace advspk
