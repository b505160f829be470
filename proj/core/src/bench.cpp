#include "advspk/bench.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace advspk::bench {

using nlohmann::json;
namespace fs = std::filesystem;

std::string error_line(std::string_view code, std::string_view message) {
  return json{{"error", std::string(code)}, {"message", std::string(message)}}.dump();
}

std::string_view to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::none: return "none";
    case DefenseKind::adv_fgsm: return "adv_fgsm";
    case DefenseKind::adv_pgd: return "adv_pgd";
    case DefenseKind::alr: return "alr";
    case DefenseKind::noise: return "noise";
  }
  return "none";
}

DefenseKind parse_defense_kind(std::string_view name) {
  for (auto k : {DefenseKind::none, DefenseKind::adv_fgsm, DefenseKind::adv_pgd, DefenseKind::alr, DefenseKind::noise})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown defense \"" + std::string(name) +
                              "\" (expected none, adv_fgsm, adv_pgd, alr or noise)");
}

AttackConfig at_strength(const AttackSpec& spec, double strength) {
  AttackConfig c = spec.config;
  if (c.kind == AttackKind::cw_l2)
    c.delta = strength;
  else
    c.epsilon = strength;
  return c;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

json attack_to_json(const AttackConfig& a) {
  return {{"kind", std::string(to_string(a.kind))},
          {"epsilon", a.epsilon},
          {"alpha", a.alpha ? json(*a.alpha) : json(nullptr)},
          {"iterations", a.iterations},
          {"random_start", a.random_start},
          {"gradient_at_origin", a.gradient_at_origin},
          {"delta", a.delta},
          {"c_init", a.c_init},
          {"c_search_steps", a.c_search_steps},
          {"cw_iterations", a.cw_iterations},
          {"cw_learning_rate", a.cw_learning_rate},
          {"cw_patience", a.cw_patience},
          {"clip_min", a.clip_min},
          {"clip_max", a.clip_max},
          {"seed", a.seed}};
}

AttackConfig attack_from_json(const json& j) {
  AttackConfig a;
  a.kind = parse_attack_kind(j.at("kind").get<std::string>());
  a.epsilon = j.at("epsilon").get<double>();
  if (j.contains("alpha") && !j.at("alpha").is_null()) a.alpha = j.at("alpha").get<double>();
  a.iterations = j.at("iterations").get<std::size_t>();
  a.random_start = j.at("random_start").get<bool>();
  a.gradient_at_origin = j.at("gradient_at_origin").get<bool>();
  a.delta = j.at("delta").get<double>();
  a.c_init = j.at("c_init").get<double>();
  a.c_search_steps = j.at("c_search_steps").get<std::size_t>();
  a.cw_iterations = j.at("cw_iterations").get<std::size_t>();
  a.cw_learning_rate = j.at("cw_learning_rate").get<double>();
  a.cw_patience = j.at("cw_patience").get<std::size_t>();
  a.clip_min = j.at("clip_min").get<double>();
  a.clip_max = j.at("clip_max").get<double>();
  a.seed = j.at("seed").get<std::uint64_t>();
  return a;
}

json optimizer_to_json(const OptimizerConfig& o) {
  return {{"learning_rate", o.learning_rate}, {"beta1", o.beta1},           {"beta2", o.beta2},
          {"adam_eps", o.adam_eps},           {"batch_size", o.batch_size}, {"epochs", o.epochs},
          {"seed", o.seed},                   {"crop_seconds", o.crop_seconds}};
}

OptimizerConfig optimizer_from_json(const json& j) {
  OptimizerConfig o;
  o.learning_rate = j.at("learning_rate").get<double>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.adam_eps = j.at("adam_eps").get<double>();
  o.batch_size = j.at("batch_size").get<std::size_t>();
  o.epochs = j.at("epochs").get<std::size_t>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.crop_seconds = j.at("crop_seconds").get<double>();
  return o;
}

json model_to_json(const ModelConfig& m) {
  json j = json::parse(to_json(m));
  ModelConfig other = m;
  other.architecture = m.architecture == Architecture::cnn ? Architecture::tdnn : Architecture::cnn;
  const json k = json::parse(to_json(other));
  for (const char* key : {"cnn", "tdnn"})
    if (!j.contains(key)) j[key] = k.at(key);
  return j;
}

json to_json_object(const ExperimentConfig& c) {
  json voices = json::array();
  for (const auto& v : c.corpus.synth.voices)
    voices.push_back({{"f0_hz", v.f0_hz},
                      {"formant1_hz", v.formant1_hz},
                      {"formant2_hz", v.formant2_hz},
                      {"noise_floor", v.noise_floor}});
  json attacks = json::array();
  for (const auto& a : c.attacks) attacks.push_back({{"attack", attack_to_json(a.config)}, {"strengths", a.strengths}});
  json sim = json::array();
  for (auto k : c.similarity_attacks) sim.push_back(std::string(to_string(k)));
  const auto& alr = c.defense.alr;
  return {
      {"corpus",
       {{"source", c.corpus.source == CorpusSource::synth ? "synth" : "wav_dir"},
        {"synth",
         {{"n_speakers", c.corpus.synth.n_speakers},
          {"utterances_per_speaker", c.corpus.synth.utterances_per_speaker},
          {"duration_s", c.corpus.synth.duration_s},
          {"sample_rate", c.corpus.synth.sample_rate},
          {"seed", c.corpus.synth.seed},
          {"voices", voices}}},
        {"wav_dir", c.corpus.wav_dir.string()},
        {"train_fraction", c.corpus.train_fraction},
        {"split_seed", c.corpus.split_seed}}},
      {"model", model_to_json(c.model)},
      {"optimizer", optimizer_to_json(c.optimizer)},
      {"defense",
       {{"kind", std::string(to_string(c.defense.kind))},
        {"w_at", c.defense.w_at},
        {"inner_attack", attack_to_json(c.defense.inner_attack)},
        {"alr",
         {{"xi", alr.xi},
          {"n_power_iterations", alr.n_power_iterations},
          {"epsilon_alr", alr.epsilon_alr},
          {"lipschitz_target", alr.lipschitz_target},
          {"lambda_alr", alr.lambda_alr},
          {"output_distance", alr.output_distance == OutputDistance::l1 ? "l1" : "squared_l2"}}},
        {"alr_epoch_multiplier", c.defense.alr_epoch_multiplier},
        {"noise_sigma", c.defense.noise_sigma}}},
      {"attacks", attacks},
      {"pgd_iterations", c.pgd_iterations},
      {"similarity_attacks", sim},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"threads", c.threads},
      {"max_eval_samples", c.max_eval_samples},
      {"dump_wav", c.dump_wav}};
}

ExperimentConfig from_json_object(const json& j) {
  ExperimentConfig c;
  const auto& corpus = j.at("corpus");
  const auto source = corpus.at("source").get<std::string>();
  if (source == "synth")
    c.corpus.source = CorpusSource::synth;
  else if (source == "wav_dir")
    c.corpus.source = CorpusSource::wav_dir;
  else
    throw std::invalid_argument("corpus.source must be \"synth\" or \"wav_dir\", got \"" + source + "\"");
  const auto& s = corpus.at("synth");
  c.corpus.synth.n_speakers = s.at("n_speakers").get<std::size_t>();
  c.corpus.synth.utterances_per_speaker = s.at("utterances_per_speaker").get<std::size_t>();
  c.corpus.synth.duration_s = s.at("duration_s").get<double>();
  c.corpus.synth.sample_rate = s.at("sample_rate").get<int>();
  c.corpus.synth.seed = s.at("seed").get<std::uint64_t>();
  for (const auto& v : s.at("voices"))
    c.corpus.synth.voices.push_back({v.at("f0_hz").get<double>(), v.at("formant1_hz").get<double>(),
                                     v.at("formant2_hz").get<double>(), v.at("noise_floor").get<double>()});
  c.corpus.wav_dir = corpus.at("wav_dir").get<std::string>();
  c.corpus.train_fraction = corpus.at("train_fraction").get<double>();
  c.corpus.split_seed = corpus.at("split_seed").get<std::uint64_t>();

  c.model = parse_model_config(j.at("model").dump());
  c.optimizer = optimizer_from_json(j.at("optimizer"));

  const auto& d = j.at("defense");
  c.defense.kind = parse_defense_kind(d.at("kind").get<std::string>());
  c.defense.w_at = d.at("w_at").get<double>();
  c.defense.inner_attack = attack_from_json(d.at("inner_attack"));
  const auto& a = d.at("alr");
  c.defense.alr.xi = a.at("xi").get<double>();
  c.defense.alr.n_power_iterations = a.at("n_power_iterations").get<std::size_t>();
  c.defense.alr.epsilon_alr = a.at("epsilon_alr").get<double>();
  c.defense.alr.lipschitz_target = a.at("lipschitz_target").get<double>();
  c.defense.alr.lambda_alr = a.at("lambda_alr").get<double>();
  const auto dist = a.at("output_distance").get<std::string>();
  if (dist == "l1")
    c.defense.alr.output_distance = OutputDistance::l1;
  else if (dist == "squared_l2")
    c.defense.alr.output_distance = OutputDistance::squared_l2;
  else
    throw std::invalid_argument("defense.alr.output_distance must be \"l1\" or \"squared_l2\", got \"" + dist + "\"");
  c.defense.alr_epoch_multiplier = d.at("alr_epoch_multiplier").get<std::size_t>();
  c.defense.noise_sigma = d.at("noise_sigma").get<double>();

  json base_attack = attack_to_json(AttackConfig{});
  for (const auto& entry : j.at("attacks")) {
    AttackSpec spec;
    json merged = base_attack;
    merged.merge_patch(entry.at("attack"));
    spec.config = attack_from_json(merged);
    spec.strengths = entry.at("strengths").get<std::vector<double>>();
    c.attacks.push_back(std::move(spec));
  }
  c.pgd_iterations = j.at("pgd_iterations").get<std::vector<std::size_t>>();
  c.similarity_attacks.clear();
  for (const auto& k : j.at("similarity_attacks")) c.similarity_attacks.push_back(parse_attack_kind(k.get<std::string>()));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.output_dir = j.at("output_dir").get<std::string>();
  c.threads = j.at("threads").get<std::size_t>();
  c.max_eval_samples = j.at("max_eval_samples").get<std::size_t>();
  c.dump_wav = j.at("dump_wav").get<bool>();
  return c;
}

// Keys of `given` absent from `reference`, as dotted paths. Arrays are not
// descended except for attack entries, which are checked field by field.
void unknown_keys(const json& given, const json& reference, const std::string& prefix, std::vector<std::string>& out) {
  if (!given.is_object() || !reference.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.contains(key)) {
      out.push_back(path);
      continue;
    }
    unknown_keys(value, reference.at(key), path, out);
  }
}

json parse_text(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw BenchError("config_invalid", what + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> ExperimentConfig::problems() const {
  std::vector<std::string> out;
  auto check = [&](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      out.push_back(where + ": " + e.what());
    }
  };
  if (corpus.source == CorpusSource::synth) {
    check("corpus.synth", [&] { corpus.synth.validate(); });
    if (corpus.synth.sample_rate != model.frontend.sample_rate)
      out.push_back("corpus.synth.sample_rate " + std::to_string(corpus.synth.sample_rate) +
                    " differs from model.frontend.sample_rate " + std::to_string(model.frontend.sample_rate));
    if (corpus.synth.n_speakers != model.n_classes())
      out.push_back("model has " + std::to_string(model.n_classes()) + " classes but the corpus has " +
                    std::to_string(corpus.synth.n_speakers) + " speakers");
  } else if (corpus.wav_dir.empty()) {
    out.push_back("corpus.wav_dir must be set when corpus.source is wav_dir");
  }
  if (!(corpus.train_fraction > 0 && corpus.train_fraction < 1))
    out.push_back("corpus.train_fraction must lie in (0, 1)");
  check("model", [&] { model.validate(); });
  check("optimizer", [&] { optimizer.validate(); });
  if (!(defense.w_at >= 0 && defense.w_at <= 1)) out.push_back("defense.w_at must lie in [0, 1]");
  check("defense.inner_attack", [&] { defense.inner_attack.validate(); });
  if (defense.kind == DefenseKind::adv_fgsm || defense.kind == DefenseKind::adv_pgd) {
    if (!is_linf(defense.inner_attack.kind) && defense.inner_attack.kind != AttackKind::fgsm)
      out.push_back("defense.inner_attack must be an l-infinity attack");
  }
  check("defense.alr", [&] { defense.alr.validate(); });
  if (defense.alr_epoch_multiplier == 0) out.push_back("defense.alr_epoch_multiplier must be positive");
  if (!(defense.noise_sigma >= 0)) out.push_back("defense.noise_sigma must be nonnegative");
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    const std::string where = "attacks[" + std::to_string(i) + "]";
    if (attacks[i].strengths.empty()) out.push_back(where + ": strength grid is empty");
    for (double s : attacks[i].strengths) check(where, [&] { at_strength(attacks[i], s).validate(); });
  }
  if (pgd_iterations.empty()) out.push_back("pgd_iterations is empty");
  for (auto t : pgd_iterations)
    if (t == 0) out.push_back("pgd_iterations entries must be positive");
  if (similarity_attacks.empty()) out.push_back("similarity_attacks is empty");
  if (output_dir.empty()) out.push_back("output_dir is empty");
  return out;
}

void ExperimentConfig::validate() const {
  const auto list = problems();
  if (list.empty()) return;
  std::string msg = "invalid experiment config:";
  for (const auto& p : list) msg += "\n  - " + p;
  throw BenchError("config_invalid", msg);
}

ExperimentConfig default_experiment() {
  ExperimentConfig c;
  const std::vector<double> linf_grid = {0.0005, 0.002, 0.0035, 0.005};
  for (auto kind : {AttackKind::fgsm, AttackKind::pgd, AttackKind::cw_linf}) {
    AttackSpec s;
    s.config.kind = kind;
    s.strengths = linf_grid;
    c.attacks.push_back(s);
  }
  AttackSpec l2;
  l2.config.kind = AttackKind::cw_l2;
  l2.strengths = {0.0, 0.001, 0.01, 0.1};
  c.attacks.push_back(l2);
  return c;
}

std::string to_json(const ExperimentConfig& config, int indent) { return to_json_object(config).dump(indent); }

namespace {

ExperimentConfig parse_checked(json given) {
  const json reference = to_json_object(default_experiment());
  std::vector<std::string> unknown;
  unknown_keys(given, reference, "", unknown);
  if (given.contains("attacks") && given.at("attacks").is_array()) {
    const json attack_ref = attack_to_json(AttackConfig{});
    for (std::size_t i = 0; i < given.at("attacks").size(); ++i) {
      const auto& e = given.at("attacks").at(i);
      const std::string p = "attacks[" + std::to_string(i) + "]";
      for (const auto& [key, value] : e.items())
        if (key != "attack" && key != "strengths") unknown.push_back(p + "." + key);
      if (e.contains("attack")) unknown_keys(e.at("attack"), attack_ref, p + ".attack", unknown);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config fields:";
    for (const auto& u : unknown) msg += " " + u;
    throw BenchError("config_invalid", msg);
  }
  json merged = reference;
  merged.merge_patch(given);
  // merge_patch replaces arrays wholesale, which is the wanted behaviour for grids.
  ExperimentConfig c;
  try {
    c = from_json_object(merged);
  } catch (const BenchError&) {
    throw;
  } catch (const std::exception& e) {
    throw BenchError("config_invalid", std::string("experiment config: ") + e.what());
  }
  return c;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text) {
  return parse_checked(parse_text(text, "experiment config"));
}

ExperimentConfig load_experiment_config(const fs::path& path, const std::vector<std::string>& overrides) {
  json given = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw BenchError("io_error", "cannot read config " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    given = parse_text(text, path.string());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw BenchError("config_invalid", "override \"" + o + "\" is not of the form key.path=value");
    const std::string key = o.substr(0, eq), raw = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    json* node = &given;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw BenchError("config_invalid", "override key \"" + key + "\" has an empty component");
      if (!node->is_object()) *node = json::object();
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return parse_checked(given);
}

fs::path resolve_output_dir(const ExperimentConfig& config) {
  if (config.output_dir.is_absolute()) return config.output_dir;
  if (const char* root = std::getenv("ADVSPK_OUTPUT_ROOT"); root && *root) return fs::path(root) / config.output_dir;
  return config.output_dir;
}

// ---------------------------------------------------------------------------
// Hashing

std::string git_blob_sha1_bytes(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha1: cannot allocate digest context");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

std::string git_blob_sha1(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw BenchError("io_error", "cannot read " + file.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_sha1_bytes(content);
}

// ---------------------------------------------------------------------------
// Shared plumbing

namespace {

using Clock = std::chrono::steady_clock;

void say(const RunOptions& o, const std::string& line) {
  if (o.log) *o.log << line << std::endl;
}

/// Output directory that refuses to overwrite existing files unless forced.
class Outputs {
 public:
  Outputs(fs::path dir, bool force, std::initializer_list<std::string> names) : dir_(std::move(dir)) {
    for (const auto& n : names) {
      if (!force && fs::exists(dir_ / n))
        throw BenchError("output_exists", (dir_ / n).string() + " exists; pass --force to overwrite");
    }
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw BenchError("io_error", "cannot create " + dir_.string() + ": " + ec.message());
  }
  fs::path operator/(const std::string& name) const { return dir_ / name; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw BenchError("io_error", "cannot open " + p.string() + " for writing");
  out.precision(17);
  return out;
}

void csv_preamble(std::ostream& out, const ExperimentConfig& config) {
  out << "# seed: " << config.seed << "\n# config: " << to_json(config, -1) << "\n";
}

void write_json(const fs::path& p, const json& j) {
  auto out = open_out(p);
  out << j.dump(2) << "\n";
}

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"count", m.count}}; }

std::vector<std::vector<double>> waveforms_of(const Dataset& d) { return d.waveforms(); }

Model load_checked(const ExperimentConfig& config, const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw BenchError("io_error", "checkpoint " + checkpoint.string() + " does not exist");
  Model m = [&] {
    try {
      return load_model(checkpoint);
    } catch (const std::exception& e) {
      throw BenchError("io_error", "cannot load " + checkpoint.string() + ": " + e.what());
    }
  }();
  if (m.config().architecture != config.model.architecture)
    throw BenchError("architecture_mismatch", "checkpoint " + checkpoint.string() + " holds a " +
                                                  std::string(to_string(m.config().architecture)) +
                                                  " but the config declares " +
                                                  std::string(to_string(config.model.architecture)));
  if (!(m.config().frontend == config.model.frontend))
    throw BenchError("config_mismatch", "checkpoint " + checkpoint.string() + " uses a different front-end");
  return m;
}

std::string strength_tag(double s) {
  std::ostringstream o;
  o << s;
  return o.str();
}

}  // namespace

Corpora load_corpora(const ExperimentConfig& config) {
  Dataset full;
  try {
    full = config.corpus.source == CorpusSource::synth
               ? synth_corpus(config.corpus.synth)
               : load_wav_dir(config.corpus.wav_dir, config.model.frontend.sample_rate);
  } catch (const std::exception& e) {
    throw BenchError("corpus_error", e.what());
  }
  if (full.n_classes() != config.model.n_classes())
    throw BenchError("config_invalid", "corpus has " + std::to_string(full.n_classes()) + " speakers but the model has " +
                                           std::to_string(config.model.n_classes()) + " classes");
  auto [train, test] = split(full, config.corpus.train_fraction, config.corpus.split_seed);
  if (config.max_eval_samples > 0 && test.samples.size() > config.max_eval_samples)
    test.samples.resize(config.max_eval_samples);
  return {std::move(train), std::move(test)};
}

DefenseTrace train_defended(Model& model, const Dataset& train, const ExperimentConfig& config) {
  const auto& d = config.defense;
  switch (d.kind) {
    case DefenseKind::none: {
      DefenseTrace t;
      t.trace = train_erm(model, train, config.optimizer);
      return t;
    }
    case DefenseKind::adv_fgsm:
    case DefenseKind::adv_pgd: {
      AdvTrainConfig a;
      a.attack = d.inner_attack;
      a.attack.kind = d.kind == DefenseKind::adv_fgsm ? AttackKind::fgsm : AttackKind::pgd;
      a.w_at = d.w_at;
      a.optimizer = config.optimizer;
      return adversarial_train(model, train, a);
    }
    case DefenseKind::alr: {
      AlrConfig a = d.alr;
      a.optimizer = config.optimizer;
      a.optimizer.epochs = config.optimizer.epochs * d.alr_epoch_multiplier;
      return alr_train(model, train, a);
    }
    case DefenseKind::noise: {
      DefenseTrace t;
      t.trace = noise_augment_train(model, train, d.noise_sigma, config.optimizer);
      return t;
    }
  }
  throw std::logic_error("unhandled defense");
}

// ---------------------------------------------------------------------------
// train

TrainOutcome cmd_train(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Outputs out(resolve_output_dir(config), options.force, {"model.ckpt", "train_log.csv", "train_report.json"});
  const auto t0 = Clock::now();
  Corpora data = load_corpora(config);
  say(options, "training " + std::string(to_string(config.model.architecture)) + " with defense " +
                   std::string(to_string(config.defense.kind)) + " on " + std::to_string(data.train.size()) +
                   " utterances");
  Model model = build_model(config.model);
  TrainOutcome result;
  result.trace = train_defended(model, data.train, config);
  result.checkpoint = out / "model.ckpt";
  save_model(result.checkpoint, model);
  result.checkpoint_sha1 = git_blob_sha1(result.checkpoint);
  const auto waves = waveforms_of(data.test);
  const auto labels = data.test.labels();
  // Score the checkpoint as stored (float32), which is what later commands load.
  const Model stored = load_model(result.checkpoint);
  result.benign_accuracy = accuracy(predict(stored, waves), labels);

  {
    auto log = open_out(out / "train_log.csv");
    csv_preamble(log, config);
    log << "epoch,clean_loss,aux_loss,total_loss,train_accuracy\n";
    for (const auto& r : result.trace.trace.epochs)
      log << r.epoch << ',' << r.clean_loss << ',' << r.aux_loss << ',' << r.total_loss << ',' << r.accuracy << '\n';
  }
  json report = {{"command", "train"},
                 {"seed", config.seed},
                 {"config", to_json_object(config)},
                 {"checkpoint", "model.ckpt"},
                 {"checkpoint_sha1", result.checkpoint_sha1},
                 {"train_samples", data.train.size()},
                 {"test_samples", data.test.size()},
                 {"benign_accuracy", result.benign_accuracy},
                 {"attack_fallbacks", result.trace.attack_fallbacks},
                 {"zero_gradient_events", result.trace.zero_gradient_events},
                 {"runtime_seconds", std::chrono::duration<double>(Clock::now() - t0).count()}};
  write_json(out / "train_report.json", report);
  say(options, "benign accuracy " + std::to_string(result.benign_accuracy) + ", checkpoint " +
                   result.checkpoint.string());
  return result;
}

// ---------------------------------------------------------------------------
// attack

ExperimentReport evaluate_attacks(const Model& model, const Dataset& test, const ExperimentConfig& config,
                                  const fs::path& wav_dir) {
  ExperimentReport report;
  const auto waves = waveforms_of(test);
  const auto labels = test.labels();
  report.samples = waves.size();
  const auto benign = predict(model, waves);
  report.benign_accuracy = accuracy(benign, labels);
  for (std::size_t i = 0; i < waves.size(); ++i) {
    ManifestRow r;
    r.attack = "benign";
    r.index = i;
    r.utterance_id = test.samples[i].utterance_id;
    r.label = labels[i];
    r.benign_prediction = benign[i];
    r.adversarial_prediction = benign[i];
    r.snr_db = kSnrCapDb;
    report.manifest.push_back(std::move(r));
  }
  const Frontend& frontend = model.frontend();
  for (const auto& spec : config.attacks) {
    for (double strength : spec.strengths) {
      AttackConfig ac = at_strength(spec, strength);
      const auto batch = attack_batch(model, waves, labels, ac, config.threads);
      AttackSummary s;
      s.kind = ac.kind;
      s.strength = strength;
      s.samples = waves.size() - batch.failed_samples;
      s.failed = batch.failed_samples;
      s.adversarial_accuracy = batch.adversarial_accuracy;
      std::vector<ManifestRow> rows(waves.size());
      parallel_for(waves.size(), config.threads, [&](std::size_t i) {
        ManifestRow& r = rows[i];
        r.attack = std::string(to_string(ac.kind));
        r.strength = strength;
        r.epsilon = ac.epsilon;
        r.delta = ac.delta;
        r.iterations = ac.kind == AttackKind::fgsm ? 1 : ac.kind == AttackKind::pgd ? ac.iterations : ac.cw_iterations;
        r.index = i;
        r.utterance_id = test.samples[i].utterance_id;
        r.label = labels[i];
        r.error = batch.errors[i];
        if (!r.error.empty()) {
          r.benign_prediction = benign[i];
          r.adversarial_prediction = -1;
          return;
        }
        const auto& res = batch.results[i];
        r.benign_prediction = res.benign_prediction;
        r.adversarial_prediction = res.adversarial_prediction;
        r.linf = res.perturbation.linf;
        r.l2 = res.perturbation.l2;
        r.success = res.perturbation.success;
        r.snr_db = snr_db(waves[i], res.adversarial);
        r.lsd_db = lsd_db(waves[i], res.adversarial, frontend);
      });
      std::vector<double> snrs, lsds;
      for (const auto& r : rows) {
        if (!r.error.empty() || r.l2 == 0.0) continue;
        snrs.push_back(r.snr_db);
        lsds.push_back(r.lsd_db);
      }
      s.snr_db = mean_std(snrs);
      s.lsd_db = mean_std(lsds);
      report.attacks.push_back(s);
      if (!wav_dir.empty()) {
        const fs::path dir = wav_dir / (std::string(to_string(ac.kind)) + "_" + strength_tag(strength));
        fs::create_directories(dir);
        for (std::size_t i = 0; i < waves.size(); ++i) {
          if (!batch.errors[i].empty()) continue;
          std::string name = test.samples[i].utterance_id;
          std::replace(name.begin(), name.end(), '/', '_');
          write_wav(dir / (name + ".wav"), batch.results[i].adversarial, test.samples[i].sample_rate);
        }
      }
      for (auto& r : rows) report.manifest.push_back(std::move(r));
    }
  }
  return report;
}


namespace {

json report_to_json(const ExperimentReport& r, const ExperimentConfig& config) {
  json attacks = json::array();
  for (const auto& a : r.attacks)
    attacks.push_back({{"attack", std::string(to_string(a.kind))},
                       {"strength", a.strength},
                       {"samples", a.samples},
                       {"failed", a.failed},
                       {"adversarial_accuracy", a.adversarial_accuracy},
                       {"snr_db", mean_std_json(a.snr_db)},
                       {"lsd_db", mean_std_json(a.lsd_db)}});
  return {{"command", "attack"},
          {"seed", config.seed},
          {"config", to_json_object(config)},
          {"checkpoint_sha1", r.checkpoint_sha1},
          {"samples", r.samples},
          {"benign_accuracy", r.benign_accuracy},
          {"attacks", attacks},
          {"runtime_seconds", r.runtime_seconds}};
}

constexpr const char* kManifestHeader =
    "attack,strength,epsilon,delta,iterations,index,utterance_id,label,benign_prediction,adversarial_prediction,linf,l2,snr_db,lsd_db,success,"
    "error";

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

void write_manifest(const fs::path& p, const ExperimentReport& r, const ExperimentConfig& config) {
  auto out = open_out(p);
  csv_preamble(out, config);
  out << kManifestHeader << "\n";
  for (const auto& m : r.manifest)
    out << m.attack << ',' << m.strength << ',' << m.epsilon << ',' << m.delta << ',' << m.iterations << ',' << m.index << ',' << csv_escape(m.utterance_id) << ',' << m.label << ','
        << m.benign_prediction << ',' << m.adversarial_prediction << ',' << m.linf << ',' << m.l2 << ',' << m.snr_db
        << ',' << m.lsd_db << ',' << (m.success ? 1 : 0) << ',' << csv_escape(m.error) << '\n';
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else {
      out.back() += ch;
    }
  }
  return out;
}

}  // namespace

ExperimentReport cmd_attack(const ExperimentConfig& config, const fs::path& checkpoint, const RunOptions& options) {
  config.validate();
  const Model model = load_checked(config, checkpoint);
  Outputs out(resolve_output_dir(config), options.force, {"report.json", "manifest.csv"});
  const auto t0 = Clock::now();
  const Corpora data = load_corpora(config);
  say(options, "attacking " + std::to_string(data.test.size()) + " test utterances with " +
                   std::to_string(config.attacks.size()) + " attack(s)");
  ExperimentReport report = evaluate_attacks(model, data.test, config, config.dump_wav ? out / "wav" : fs::path{});
  report.checkpoint_sha1 = git_blob_sha1(checkpoint);
  report.runtime_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  write_manifest(out / "manifest.csv", report, config);
  write_json(out / "report.json", report_to_json(report, config));
  for (const auto& a : report.attacks) {
    std::ostringstream line;
    line << to_string(a.kind) << " @ " << a.strength << ": adversarial accuracy " << a.adversarial_accuracy
         << ", mean SNR " << a.snr_db.mean << " dB";
    say(options, line.str());
  }
  return report;
}

// ---------------------------------------------------------------------------
// sweep

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config,
                                const std::vector<std::pair<std::string, fs::path>>& arms, const RunOptions& options) {
  config.validate();
  if (arms.empty()) throw BenchError("missing_arm", "sweep needs at least one defense arm (name=checkpoint)");
  std::vector<Model> models;
  for (const auto& [name, path] : arms) {
    if (name.empty()) throw BenchError("missing_arm", "defense arm for " + path.string() + " has no name");
    if (!fs::exists(path)) throw BenchError("missing_arm", "checkpoint for arm \"" + name + "\" not found: " + path.string());
    models.push_back(load_checked(config, path));
  }
  Outputs out(resolve_output_dir(config), options.force, {"sweep.csv"});
  const Corpora data = load_corpora(config);
  std::vector<SweepRow> rows;
  for (std::size_t a = 0; a < arms.size(); ++a) {
    say(options, "sweeping arm " + arms[a].first);
    const auto report = evaluate_attacks(models[a], data.test, config);
    for (const auto& s : report.attacks)
      rows.push_back({arms[a].first, s.kind, s.strength, s.samples, s.adversarial_accuracy, s.snr_db.mean, s.lsd_db.mean});
  }
  auto csv = open_out(out / "sweep.csv");
  csv_preamble(csv, config);
  csv << "defense,attack,strength,samples,adversarial_accuracy,mean_snr_db,mean_lsd_db\n";
  for (const auto& r : rows)
    csv << r.defense << ',' << to_string(r.attack) << ',' << r.strength << ',' << r.samples << ','
        << r.adversarial_accuracy << ',' << r.mean_snr_db << ',' << r.mean_lsd_db << '\n';
  return rows;
}

// ---------------------------------------------------------------------------
// pgd-iters

std::vector<PgdIterationRow> pgd_iteration_study(const Classifier& model, const Dataset& test, const AttackConfig& pgd_config,
                                                 std::span<const double> epsilons,
                                                 std::span<const std::size_t> iterations, std::size_t threads) {
  if (iterations.empty()) throw std::invalid_argument("pgd_iteration_study: empty iteration grid");
  const std::size_t t_max = *std::max_element(iterations.begin(), iterations.end());
  const auto waves = test.waveforms();
  const auto labels = test.labels();
  std::vector<PgdIterationRow> rows;
  for (double eps : epsilons) {
    // correct[i][k]: sample i still classified correctly after iterations[k] steps.
    std::vector<std::vector<char>> correct(waves.size(), std::vector<char>(iterations.size(), 0));
    parallel_for(waves.size(), threads, [&](std::size_t i) {
      AttackConfig c = pgd_config;
      c.kind = AttackKind::pgd;
      c.epsilon = eps;
      c.iterations = t_max;
      c.seed = sample_seed(pgd_config.seed, i);
      pgd(model, waves[i], labels[i], c, [&](std::size_t it, std::span<const double> iterate) {
        for (std::size_t k = 0; k < iterations.size(); ++k) {
          if (iterations[k] != it) continue;
          const std::vector<std::vector<double>> one = {std::vector<double>(iterate.begin(), iterate.end())};
          correct[i][k] = predict(model, one).front() == labels[i];
        }
      });
    });
    for (std::size_t k = 0; k < iterations.size(); ++k) {
      std::size_t n = 0;
      for (const auto& c : correct) n += c[k];
      rows.push_back({eps, iterations[k], static_cast<double>(n) / static_cast<double>(waves.size())});
    }
  }
  return rows;
}

std::vector<PgdIterationRow> cmd_pgd_iters(const ExperimentConfig& config, const fs::path& checkpoint,
                                           const RunOptions& options) {
  config.validate();
  const Model model = load_checked(config, checkpoint);
  Outputs out(resolve_output_dir(config), options.force, {"pgd_iters.csv"});
  const Corpora data = load_corpora(config);
  AttackConfig base;
  base.kind = AttackKind::pgd;
  std::vector<double> eps = {base.epsilon};
  for (const auto& a : config.attacks)
    if (a.config.kind == AttackKind::pgd) {
      base = a.config;
      eps = a.strengths;
      break;
    }
  say(options, "PGD iteration study on " + std::to_string(data.test.size()) + " utterances");
  auto rows = pgd_iteration_study(model, data.test, base, eps, config.pgd_iterations, config.threads);
  auto csv = open_out(out / "pgd_iters.csv");
  csv_preamble(csv, config);
  csv << "epsilon,iterations,adversarial_accuracy\n";
  for (const auto& r : rows) csv << r.epsilon << ',' << r.iterations << ',' << r.adversarial_accuracy << '\n';
  return rows;
}

// ---------------------------------------------------------------------------
// transfer

std::vector<TransferRow> transfer_eval(const Model& source, const Model& target, const Dataset& test,
                                       const AttackSpec& attack, std::size_t threads, std::string_view source_name,
                                       std::string_view target_name) {
  if (source.config().frontend.sample_rate != target.config().frontend.sample_rate)
    throw BenchError("config_mismatch", "source and target models expect different sample rates");
  if (source.n_classes() != target.n_classes())
    throw BenchError("config_mismatch", "source and target models have different label sets");
  const auto waves = test.waveforms();
  const auto labels = test.labels();
  const double source_benign = accuracy(predict(source, waves), labels);
  const double target_benign = accuracy(predict(target, waves), labels);
  std::vector<TransferRow> rows;
  for (double strength : attack.strengths) {
    const AttackConfig c = at_strength(attack, strength);
    const auto batch = attack_batch(source, waves, labels, c, threads);
    std::vector<std::vector<double>> adv;
    std::vector<int> kept;
    for (std::size_t i = 0; i < waves.size(); ++i) {
      if (!batch.errors[i].empty()) continue;
      adv.push_back(batch.results[i].adversarial);
      kept.push_back(labels[i]);
    }
    TransferRow r;
    r.source = source_name;
    r.target = target_name;
    r.attack = c.kind;
    r.strength = strength;
    r.samples = adv.size();
    r.source_benign_accuracy = source_benign;
    r.source_adversarial_accuracy = batch.adversarial_accuracy;
    r.target_benign_accuracy = target_benign;
    r.target_transfer_accuracy = adv.empty() ? 0.0 : accuracy(predict(target, adv), kept);
    rows.push_back(r);
  }
  return rows;
}

std::vector<TransferRow> cmd_transfer(const ExperimentConfig& config, const fs::path& source_path,
                                      const fs::path& target_path, bool both_directions, const RunOptions& options) {
  config.validate();
  auto load_any = [](const fs::path& p) {
    if (!fs::exists(p)) throw BenchError("io_error", "checkpoint " + p.string() + " does not exist");
    try {
      return load_model(p);
    } catch (const std::exception& e) {
      throw BenchError("io_error", "cannot load " + p.string() + ": " + e.what());
    }
  };
  const Model source = load_any(source_path);
  const Model target = load_any(target_path);
  if (source.config().frontend.sample_rate != config.model.frontend.sample_rate ||
      target.config().frontend.sample_rate != config.model.frontend.sample_rate)
    throw BenchError("config_mismatch", "checkpoint sample rate differs from the experiment config");
  Outputs out(resolve_output_dir(config), options.force, {"transfer.csv"});
  const Corpora data = load_corpora(config);
  const std::string sname(to_string(source.config().architecture)), tname(to_string(target.config().architecture));
  std::vector<TransferRow> rows;
  for (const auto& a : config.attacks) {
    say(options, "transferring " + std::string(to_string(a.config.kind)) + " from " + sname + " to " + tname);
    auto fwd = transfer_eval(source, target, data.test, a, config.threads, "source:" + sname, "target:" + tname);
    rows.insert(rows.end(), fwd.begin(), fwd.end());
    if (both_directions) {
      auto back = transfer_eval(target, source, data.test, a, config.threads, "target:" + tname, "source:" + sname);
      rows.insert(rows.end(), back.begin(), back.end());
    }
  }
  auto csv = open_out(out / "transfer.csv");
  csv_preamble(csv, config);
  csv << "source,target,attack,strength,samples,source_benign_accuracy,source_adversarial_accuracy,"
         "target_benign_accuracy,target_transfer_accuracy\n";
  for (const auto& r : rows)
    csv << r.source << ',' << r.target << ',' << to_string(r.attack) << ',' << r.strength << ',' << r.samples << ','
        << r.source_benign_accuracy << ',' << r.source_adversarial_accuracy << ',' << r.target_benign_accuracy << ','
        << r.target_transfer_accuracy << '\n';
  return rows;
}

// ---------------------------------------------------------------------------
// spectrogram

SpectrogramStats cmd_spectrogram(const fs::path& original, const fs::path& perturbed, const ExperimentConfig& config,
                                 const RunOptions& options) {
  config.model.frontend.validate();
  AudioSample a, b;
  try {
    a = read_wav(original);
    b = read_wav(perturbed);
  } catch (const std::exception& e) {
    throw BenchError("io_error", e.what());
  }
  if (a.sample_rate != b.sample_rate || a.sample_rate != config.model.frontend.sample_rate)
    throw BenchError("config_mismatch", "sample rates differ: " + std::to_string(a.sample_rate) + ", " +
                                            std::to_string(b.sample_rate) + ", front-end " +
                                            std::to_string(config.model.frontend.sample_rate));
  if (a.waveform.size() != b.waveform.size())
    throw BenchError("config_mismatch", "waveforms differ in length (" + std::to_string(a.waveform.size()) + " vs " +
                                            std::to_string(b.waveform.size()) + ")");
  Outputs out(resolve_output_dir(config), options.force, {"original.csv", "perturbed.csv", "stats.json"});
  const Frontend frontend(config.model.frontend);
  SpectrogramStats s;
  try {
    s.original = frontend.log_mel(a.waveform);
    s.perturbed = frontend.log_mel(b.waveform);
    s.snr_db = snr_db(a.waveform, b.waveform);
    s.lsd_db = lsd_db(a.waveform, b.waveform, frontend);
  } catch (const std::exception& e) {
    throw BenchError("invalid_input", e.what());
  }
  write_spectrogram_csv(out / "original.csv", s.original, config.model.frontend);
  write_spectrogram_csv(out / "perturbed.csv", s.perturbed, config.model.frontend);
  write_json(out / "stats.json", {{"command", "spectrogram"},
                                  {"seed", config.seed},
                                  {"config", to_json_object(config)},
                                  {"original", original.string()},
                                  {"perturbed", perturbed.string()},
                                  {"snr_db", s.snr_db},
                                  {"lsd_db", s.lsd_db}});
  std::ostringstream line;
  line << "SNR " << s.snr_db << " dB, LSD " << s.lsd_db << " dB";
  say(options, line.str());
  return s;
}

// ---------------------------------------------------------------------------
// similarity

std::vector<SimilarityResult> similarity_study(const Classifier& model, const Dataset& test,
                                               const ExperimentConfig& config) {
  std::vector<double> grid = {0.0005, 0.002, 0.0035, 0.005};
  for (const auto& a : config.attacks)
    if (is_linf(a.config.kind)) {
      grid = a.strengths;
      break;
    }
  auto base_for = [&](AttackKind kind) {
    for (const auto& a : config.attacks)
      if (a.config.kind == kind) return a.config;
    AttackConfig c;
    c.kind = kind;
    return c;
  };
  const auto waves = test.waveforms();
  const auto labels = test.labels();
  // Samples whose attack raised an error count as correctly classified, so
  // they never enter the misclassified intersection.
  auto predictions_of = [&](const AttackConfig& c) {
    const auto batch = attack_batch(model, waves, labels, c, config.threads);
    std::vector<int> p(waves.size());
    for (std::size_t i = 0; i < waves.size(); ++i)
      p[i] = batch.errors[i].empty() ? batch.results[i].adversarial_prediction : labels[i];
    return p;
  };
  std::optional<std::vector<int>> l2_predictions;
  std::vector<SimilarityResult> out;
  for (double eps : grid) {
    SimilarityResult r;
    r.strength = eps;
    r.attacks = config.similarity_attacks;
    std::vector<std::vector<int>> preds;
    for (auto kind : config.similarity_attacks) {
      AttackConfig c = base_for(kind);
      if (kind == AttackKind::cw_l2) {
        if (!l2_predictions) l2_predictions = predictions_of(c);
        preds.push_back(*l2_predictions);
        continue;
      }
      c.epsilon = eps;
      preds.push_back(predictions_of(c));
    }
    r.matrix = similarity_matrix(preds, labels);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SimilarityResult> cmd_similarity(const ExperimentConfig& config, const fs::path& checkpoint,
                                             const RunOptions& options) {
  config.validate();
  const Model model = load_checked(config, checkpoint);
  const fs::path dir = resolve_output_dir(config);
  Outputs out(dir, options.force, {"similarity.csv"});
  const Corpora data = load_corpora(config);
  say(options, "similarity study on " + std::to_string(data.test.size()) + " utterances");
  auto results = similarity_study(model, data.test, config);
  auto csv = open_out(out / "similarity.csv");
  csv_preamble(csv, config);
  csv << "strength,attack_a,attack_b,similarity\n";
  for (const auto& r : results)
    for (std::size_t i = 0; i < r.attacks.size(); ++i)
      for (std::size_t j = 0; j < r.attacks.size(); ++j) {
        csv << r.strength << ',' << to_string(r.attacks[i]) << ',' << to_string(r.attacks[j]) << ',';
        if (const auto& v = r.matrix.at(i, j))
          csv << *v;
        else
          csv << "undefined";
        csv << '\n';
      }
  return results;
}

// ---------------------------------------------------------------------------
// verify

VerifyResult cmd_verify(const fs::path& directory) {
  VerifyResult v;
  auto fail = [&](const std::string& m) {
    v.ok = false;
    v.messages.push_back(m);
  };
  std::ifstream rin(directory / "report.json");
  if (!rin) throw BenchError("io_error", "no report.json in " + directory.string());
  json report;
  try {
    report = json::parse(rin);
  } catch (const json::exception& e) {
    throw BenchError("io_error", std::string("report.json: ") + e.what());
  }
  std::ifstream min(directory / "manifest.csv");
  if (!min) throw BenchError("io_error", "no manifest.csv in " + directory.string());

  struct Tally {
    std::size_t n = 0, correct = 0, failed = 0;
  };
  std::map<std::pair<std::string, double>, Tally> tallies;
  Tally benign;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(min, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kManifestHeader) throw BenchError("verify_failed", "manifest.csv has an unexpected header");
      header = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 16) throw BenchError("verify_failed", "manifest.csv line " + std::to_string(line_no) + " is malformed");
    const int label = std::stoi(f[7]);
    const int adv = std::stoi(f[9]);
    if (f[0] == "benign") {
      ++benign.n;
      benign.correct += std::stoi(f[8]) == label;
      continue;
    }
    Tally& t = tallies[{f[0], std::stod(f[1])}];
    if (!f[15].empty()) {
      ++t.failed;
      continue;
    }
    ++t.n;
    t.correct += adv == label;
  }
  auto frac = [](const Tally& t) { return t.n ? static_cast<double>(t.correct) / static_cast<double>(t.n) : 0.0; };
  const double b = frac(benign);
  if (benign.n != report.at("samples").get<std::size_t>())
    fail("benign sample count " + std::to_string(benign.n) + " differs from report");
  if (b != report.at("benign_accuracy").get<double>())
    fail("benign accuracy recomputed as " + std::to_string(b) + " differs from report");
  std::set<std::pair<std::string, double>> seen;
  for (const auto& a : report.at("attacks")) {
    const std::pair<std::string, double> key{a.at("attack").get<std::string>(), a.at("strength").get<double>()};
    seen.insert(key);
    auto it = tallies.find(key);
    const std::string name = key.first + "@" + strength_tag(key.second);
    if (it == tallies.end()) {
      fail(name + ": no manifest rows");
      continue;
    }
    if (it->second.n != a.at("samples").get<std::size_t>()) fail(name + ": sample count differs from report");
    if (it->second.failed != a.at("failed").get<std::size_t>()) fail(name + ": failed count differs from report");
    if (frac(it->second) != a.at("adversarial_accuracy").get<double>())
      fail(name + ": adversarial accuracy recomputed as " + std::to_string(frac(it->second)) + " differs from report");
  }
  for (const auto& [key, t] : tallies)
    if (!seen.count(key)) fail(key.first + "@" + strength_tag(key.second) + ": manifest rows missing from report");
  if (v.ok) v.messages.push_back("verified " + std::to_string(seen.size()) + " attack/strength pair(s) and benign accuracy");
  return v;
}

}  // namespace advspk::bench
