#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "advspk/corpus.hpp"
#include "advspk/frontend.hpp"

using namespace advspk;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("advspk_corpus_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Hand-assembled RIFF file so the reader is checked against bytes it did not write.
void write_raw_wav(const fs::path& p, std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                   std::uint32_t rate, const std::vector<std::int16_t>& samples) {
  std::string fmt, data, out;
  put_u16(fmt, format);
  put_u16(fmt, channels);
  put_u32(fmt, rate);
  put_u32(fmt, rate * channels * bits / 8);
  put_u16(fmt, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(fmt, bits);
  for (auto v : samples) put_u16(data, static_cast<std::uint16_t>(v));
  out = "RIFF";
  put_u32(out, static_cast<std::uint32_t>(4 + 8 + fmt.size() + 8 + data.size()));
  out += "WAVEfmt ";
  put_u32(out, static_cast<std::uint32_t>(fmt.size()));
  out += fmt + "data";
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  out += data;
  std::ofstream(p, std::ios::binary) << out;
}

SynthSpec small_spec(std::size_t speakers, std::size_t utts) {
  SynthSpec s;
  s.n_speakers = speakers;
  s.utterances_per_speaker = utts;
  s.duration_s = 0.25;
  return s;
}

}  // namespace

TEST(Synth, EqualSeedsAreBitIdentical) {
  const Dataset a = synth_corpus(small_spec(3, 4));
  const Dataset b = synth_corpus(small_spec(3, 4));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples[i].waveform, b.samples[i].waveform);
    EXPECT_EQ(a.samples[i].utterance_id, b.samples[i].utterance_id);
  }
  SynthSpec other = small_spec(3, 4);
  other.seed = 2;
  EXPECT_NE(synth_corpus(other).samples[0].waveform, a.samples[0].waveform);
}

TEST(Synth, BookkeepingForTwoSpeakers) {
  SynthSpec s;
  s.n_speakers = 2;
  s.utterances_per_speaker = 20;
  s.duration_s = 2.0;
  const Dataset d = synth_corpus(s);
  EXPECT_EQ(d.size(), 40u);
  EXPECT_EQ(d.n_classes(), 2u);
  for (const auto& x : d.samples) {
    EXPECT_EQ(x.waveform.size(), 2u * 16000u);
    EXPECT_EQ(x.sample_rate, 16000);
  }
  EXPECT_NO_THROW(d.validate());
}

TEST(Synth, PeakNormalizedWithinRange) {
  for (const auto& x : synth_corpus(small_spec(3, 3)).samples) {
    double peak = 0.0;
    for (double v : x.waveform) peak = std::max(peak, std::fabs(v));
    EXPECT_NEAR(peak, 0.9, 1e-12);
  }
}

TEST(Synth, VoicesAreDistinctAndSpacedInPitch) {
  SynthSpec s;
  const auto voices = draw_voices(s);
  ASSERT_EQ(voices.size(), 10u);
  for (std::size_t i = 0; i < voices.size(); ++i)
    for (std::size_t j = i + 1; j < voices.size(); ++j) EXPECT_GE(std::fabs(voices[i].f0_hz - voices[j].f0_hz), 20.0);
}

TEST(Synth, InvalidSpecsAreRejected) {
  SynthSpec one = small_spec(1, 3);
  EXPECT_ANY_THROW(synth_corpus(one));
  SynthSpec dup = small_spec(2, 3);
  dup.voices = {{120, 500, 1500, 0.001}, {120, 500, 1500, 0.001}};
  EXPECT_ANY_THROW(synth_corpus(dup));
  SynthSpec zero = small_spec(2, 3);
  zero.duration_s = 0;
  EXPECT_ANY_THROW(synth_corpus(zero));
}

// Utterance-level mean log-mel vectors: every pair of speaker centroids is
// farther apart than the RMS spread of either speaker around its centroid.
class Separation : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(Separation, SpeakerCentroidsAreSeparated) {
  SynthSpec s;
  s.seed = GetParam();
  const Dataset d = synth_corpus(s);
  const Frontend fe{FrontendConfig{}};
  const std::size_t m = fe.config().n_mels;
  std::vector<std::vector<double>> feats;
  for (const auto& x : d.samples) {
    const Tensor lm = fe.log_mel(x.waveform);
    const std::size_t frames = lm.dim(1);
    std::vector<double> v(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t t = 0; t < frames; ++t) v[k] += lm[k * frames + t];
      v[k] /= static_cast<double>(frames);
    }
    feats.push_back(v);
  }
  const std::size_t n = d.n_classes();
  std::vector<std::vector<double>> centroid(n, std::vector<double>(m, 0.0));
  std::vector<std::size_t> count(n, 0);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto y = static_cast<std::size_t>(d.samples[i].speaker_label);
    ++count[y];
    for (std::size_t k = 0; k < m; ++k) centroid[y][k] += feats[i][k];
  }
  for (std::size_t y = 0; y < n; ++y)
    for (auto& v : centroid[y]) v /= static_cast<double>(count[y]);
  auto dist = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s2 = 0.0;
    for (std::size_t k = 0; k < m; ++k) s2 += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s2);
  };
  std::vector<double> spread(n, 0.0);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto y = static_cast<std::size_t>(d.samples[i].speaker_label);
    const double r = dist(feats[i], centroid[y]);
    spread[y] += r * r / static_cast<double>(count[y]);
  }
  for (std::size_t y = 0; y < n; ++y) spread[y] = std::sqrt(spread[y]);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      EXPECT_GT(dist(centroid[a], centroid[b]), std::max(spread[a], spread[b])) << "speakers " << a << ", " << b;
}

INSTANTIATE_TEST_SUITE_P(Seeds, Separation, ::testing::Values(1u, 2u, 3u));

TEST(Wav, ConstantHalfScale) {
  TempDir dir;
  const auto p = dir.path() / "half.wav";
  write_raw_wav(p, 1, 1, 16, 16000, std::vector<std::int16_t>(100, 16384));
  const AudioSample s = read_wav(p);
  ASSERT_EQ(s.waveform.size(), 100u);
  for (double v : s.waveform) EXPECT_EQ(v, 0.5);
  EXPECT_EQ(s.sample_rate, 16000);
}

TEST(Wav, RoundTripIsBitIdentical) {
  TempDir dir;
  std::vector<std::int16_t> pcm;
  for (int i = -32768; i <= 32767; i += 97) pcm.push_back(static_cast<std::int16_t>(i));
  pcm.push_back(32767);
  write_wav_pcm(dir.path() / "a.wav", pcm, 8000);
  const WavData back = read_wav_pcm(dir.path() / "a.wav");
  EXPECT_EQ(back.pcm, pcm);
  EXPECT_EQ(back.sample_rate, 8000);
  const AudioSample s = read_wav(dir.path() / "a.wav");
  write_wav(dir.path() / "b.wav", s.waveform, 8000);
  EXPECT_EQ(read_wav_pcm(dir.path() / "b.wav").pcm, pcm);
}

TEST(Wav, RejectsStereoAndFloat) {
  TempDir dir;
  write_raw_wav(dir.path() / "stereo.wav", 1, 2, 16, 16000, std::vector<std::int16_t>(10, 0));
  EXPECT_ANY_THROW(read_wav(dir.path() / "stereo.wav"));
  write_raw_wav(dir.path() / "float.wav", 3, 1, 16, 16000, std::vector<std::int16_t>(10, 0));
  EXPECT_ANY_THROW(read_wav(dir.path() / "float.wav"));
  std::ofstream(dir.path() / "junk.wav") << "hello";
  EXPECT_ANY_THROW(read_wav(dir.path() / "junk.wav"));
}

TEST(LoadWavDir, LabelsFollowSortedSpeakerNames) {
  TempDir dir;
  for (const char* spk : {"b", "a"}) {
    fs::create_directories(dir.path() / spk);
    write_raw_wav(dir.path() / spk / "u1.wav", 1, 1, 16, 16000, std::vector<std::int16_t>(500, spk[0] == 'a' ? 1 : 2));
  }
  const Dataset d = load_wav_dir(dir.path());
  ASSERT_EQ(d.vocabulary, (std::vector<std::string>{"a", "b"}));
  for (const auto& s : d.samples) EXPECT_EQ(s.speaker_label, s.waveform[0] == 1.0 / 32768 ? 0 : 1);
  std::set<int> labels;
  for (const auto& s : d.samples) labels.insert(s.speaker_label);
  EXPECT_EQ(labels, (std::set<int>{0, 1}));
}

TEST(LoadWavDir, DescriptiveErrors) {
  TempDir dir;
  fs::create_directories(dir.path() / "a");
  write_raw_wav(dir.path() / "a" / "u.wav", 1, 1, 16, 16000, std::vector<std::int16_t>(500, 1));
  fs::create_directories(dir.path() / "empty");
  try {
    load_wav_dir(dir.path());
    FAIL() << "expected an error for the empty speaker directory";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("empty"), std::string::npos) << e.what();
  }
  fs::remove(dir.path() / "empty");
  EXPECT_THROW(load_wav_dir(dir.path(), 8000), std::exception);
  EXPECT_NO_THROW(load_wav_dir(dir.path(), 16000));
  EXPECT_ANY_THROW(load_wav_dir(dir.path() / "missing"));
}

TEST(Split, NinetyTenPerSpeaker) {
  const Dataset d = synth_corpus(small_spec(4, 10));
  const auto [train, test] = split(d, 0.9, 1);
  std::vector<int> tr(4, 0), te(4, 0);
  for (const auto& s : train.samples) ++tr[s.speaker_label];
  for (const auto& s : test.samples) ++te[s.speaker_label];
  EXPECT_EQ(tr, (std::vector<int>{9, 9, 9, 9}));
  EXPECT_EQ(te, (std::vector<int>{1, 1, 1, 1}));
  EXPECT_EQ(train.split, SplitTag::train);
  EXPECT_EQ(test.split, SplitTag::test);
}

TEST(Split, HalfOfTwo) {
  const auto [train, test] = split(synth_corpus(small_spec(2, 2)), 0.5, 3);
  EXPECT_EQ(train.size(), 2u);
  EXPECT_EQ(test.size(), 2u);
}

TEST(Split, DisjointExhaustiveAndDeterministic) {
  const Dataset d = synth_corpus(small_spec(3, 7));
  const auto [a_train, a_test] = split(d, 0.7, 5);
  const auto [b_train, b_test] = split(d, 0.7, 5);
  std::multiset<std::string> all;
  for (const auto& s : a_train.samples) all.insert(s.utterance_id);
  for (const auto& s : a_test.samples) all.insert(s.utterance_id);
  std::multiset<std::string> expected;
  for (const auto& s : d.samples) expected.insert(s.utterance_id);
  EXPECT_EQ(all, expected);
  ASSERT_EQ(a_test.size(), b_test.size());
  for (std::size_t i = 0; i < a_test.size(); ++i) EXPECT_EQ(a_test.samples[i].utterance_id, b_test.samples[i].utterance_id);
  std::set<int> speakers;
  for (const auto& s : a_test.samples) speakers.insert(s.speaker_label);
  EXPECT_EQ(speakers.size(), 3u);
}

TEST(Split, ErrorsOnSingleUtteranceOrBadFraction) {
  Dataset d = synth_corpus(small_spec(2, 2));
  d.samples.pop_back();
  EXPECT_ANY_THROW(split(d, 0.5, 1));
  EXPECT_ANY_THROW(split(synth_corpus(small_spec(2, 2)), 1.0, 1));
  EXPECT_ANY_THROW(split(synth_corpus(small_spec(2, 2)), 0.0, 1));
}
