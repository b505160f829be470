#include "advspk/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace advspk {

using nlohmann::json;

namespace {

std::string layer_name(std::string_view kind, std::size_t index) {
  return std::string(kind) + std::to_string(index + 1);
}

// Ordered list of (name, shape, trainable, kind) describing every parameter.
enum class InitKind { he_uniform, zeros, ones };
struct ParamSpec {
  std::string name;
  Shape shape;
  bool trainable;
  InitKind init;
  std::size_t fan_in;
};

void add_bn(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t ch) {
  out.push_back({prefix + ".gamma", {ch}, true, InitKind::ones, 0});
  out.push_back({prefix + ".beta", {ch}, true, InitKind::zeros, 0});
  out.push_back({prefix + ".running_mean", {ch}, false, InitKind::zeros, 0});
  out.push_back({prefix + ".running_var", {ch}, false, InitKind::ones, 0});
}

std::vector<ParamSpec> parameter_specs(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  std::size_t in = c.frontend.n_mels;
  std::size_t embed = 0;
  if (c.architecture == Architecture::cnn) {
    for (std::size_t l = 0; l < c.cnn.channels.size(); ++l) {
      const std::size_t out = c.cnn.channels[l], k = c.cnn.kernels[l];
      const std::string conv = "cnn." + layer_name("conv", l);
      specs.push_back({conv + ".weight", {out, in, k}, true, InitKind::he_uniform, in * k});
      specs.push_back({conv + ".bias", {out}, true, InitKind::zeros, 0});
      add_bn(specs, "cnn." + layer_name("bn", l), out);
      in = out;
    }
    embed = in;
  } else {
    for (std::size_t l = 0; l < c.tdnn.frame_layers.size(); ++l) {
      const auto& fl = c.tdnn.frame_layers[l];
      const std::string conv = "tdnn." + layer_name("frame", l);
      specs.push_back({conv + ".weight", {fl.channels, in, fl.context}, true, InitKind::he_uniform, in * fl.context});
      specs.push_back({conv + ".bias", {fl.channels}, true, InitKind::zeros, 0});
      add_bn(specs, "tdnn." + layer_name("frame_bn", l), fl.channels);
      in = fl.channels;
    }
    in *= 2;
    for (std::size_t l = 0; l < c.tdnn.segment_layers.size(); ++l) {
      const std::size_t out = c.tdnn.segment_layers[l];
      const std::string seg = "tdnn." + layer_name("segment", l);
      specs.push_back({seg + ".weight", {out, in}, true, InitKind::he_uniform, in});
      specs.push_back({seg + ".bias", {out}, true, InitKind::zeros, 0});
      add_bn(specs, "tdnn." + layer_name("segment_bn", l), out);
      in = out;
    }
    embed = in;
  }
  specs.push_back({"head.weight", {c.n_classes(), embed}, true, InitKind::he_uniform, embed});
  specs.push_back({"head.bias", {c.n_classes()}, true, InitKind::zeros, 0});
  return specs;
}

void check_count(const char* what, std::size_t value) {
  if (value == 0) throw std::invalid_argument(std::string(what) + " must be positive");
}

}  // namespace

std::string_view to_string(Architecture arch) { return arch == Architecture::cnn ? "cnn" : "tdnn"; }

Architecture parse_architecture(std::string_view name) {
  if (name == "cnn") return Architecture::cnn;
  if (name == "tdnn") return Architecture::tdnn;
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "' (expected cnn or tdnn)");
}

void CnnConfig::validate() const {
  if (n_classes < 2) throw std::invalid_argument("cnn: n_classes must be at least 2");
  if (channels.size() != 8) throw std::invalid_argument("cnn: exactly 8 conv layers required, got " + std::to_string(channels.size()));
  if (kernels.size() != channels.size()) throw std::invalid_argument("cnn: kernels and channels differ in length");
  for (auto ch : channels) check_count("cnn: channel width", ch);
  for (auto k : kernels)
    if (k == 0 || k % 2 == 0) throw std::invalid_argument("cnn: kernel sizes must be odd");
  if (channels.back() != 32) throw std::invalid_argument("cnn: penultimate width must be 32");
}

void TdnnConfig::validate() const {
  if (n_classes < 2) throw std::invalid_argument("tdnn: n_classes must be at least 2");
  if (frame_layers.size() != 5) throw std::invalid_argument("tdnn: exactly 5 frame layers required");
  for (const auto& l : frame_layers) {
    check_count("tdnn: frame layer width", l.channels);
    check_count("tdnn: context", l.context);
    check_count("tdnn: dilation", l.dilation);
  }
  if (segment_layers.size() != 2) throw std::invalid_argument("tdnn: exactly 2 segment layers required");
  for (auto w : segment_layers) check_count("tdnn: segment layer width", w);
}

std::size_t ModelConfig::n_classes() const {
  return architecture == Architecture::cnn ? cnn.n_classes : tdnn.n_classes;
}

void ModelConfig::validate() const {
  frontend.validate();
  if (architecture == Architecture::cnn)
    cnn.validate();
  else
    tdnn.validate();
}

std::string to_json(const ModelConfig& c) {
  json j;
  j["architecture"] = std::string(to_string(c.architecture));
  j["seed"] = c.seed;
  j["frontend"] = {{"sample_rate", c.frontend.sample_rate}, {"frame_length", c.frontend.frame_length},
                   {"hop_length", c.frontend.hop_length},   {"fft_size", c.frontend.fft_size},
                   {"n_mels", c.frontend.n_mels},           {"fmin", c.frontend.fmin},
                   {"fmax", c.frontend.fmax},               {"log_floor", c.frontend.log_floor}};
  if (c.architecture == Architecture::cnn) {
    j["cnn"] = {{"n_classes", c.cnn.n_classes}, {"channels", c.cnn.channels}, {"kernels", c.cnn.kernels}};
  } else {
    json layers = json::array();
    for (const auto& l : c.tdnn.frame_layers)
      layers.push_back({{"channels", l.channels}, {"context", l.context}, {"dilation", l.dilation}});
    j["tdnn"] = {{"n_classes", c.tdnn.n_classes}, {"frame_layers", layers}, {"segment_layers", c.tdnn.segment_layers}};
  }
  return j.dump();
}

ModelConfig parse_model_config(std::string_view text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    c.architecture = parse_architecture(j.at("architecture").get<std::string>());
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("frontend")) {
      const auto& f = j.at("frontend");
      c.frontend.sample_rate = f.value("sample_rate", c.frontend.sample_rate);
      c.frontend.frame_length = f.value("frame_length", c.frontend.frame_length);
      c.frontend.hop_length = f.value("hop_length", c.frontend.hop_length);
      c.frontend.fft_size = f.value("fft_size", c.frontend.fft_size);
      c.frontend.n_mels = f.value("n_mels", c.frontend.n_mels);
      c.frontend.fmin = f.value("fmin", c.frontend.fmin);
      c.frontend.fmax = f.value("fmax", c.frontend.fmax);
      c.frontend.log_floor = f.value("log_floor", c.frontend.log_floor);
    }
    if (j.contains("cnn")) {
      const auto& n = j.at("cnn");
      c.cnn.n_classes = n.value("n_classes", c.cnn.n_classes);
      c.cnn.channels = n.value("channels", c.cnn.channels);
      c.cnn.kernels = n.value("kernels", c.cnn.kernels);
    }
    if (j.contains("tdnn")) {
      const auto& n = j.at("tdnn");
      c.tdnn.n_classes = n.value("n_classes", c.tdnn.n_classes);
      if (n.contains("frame_layers")) {
        c.tdnn.frame_layers.clear();
        for (const auto& l : n.at("frame_layers"))
          c.tdnn.frame_layers.push_back({l.at("channels").get<std::size_t>(), l.value("context", std::size_t{1}),
                                         l.value("dilation", std::size_t{1})});
      }
      c.tdnn.segment_layers = n.value("segment_layers", c.tdnn.segment_layers);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Parameters init_parameters(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  Parameters params;
  for (const auto& s : parameter_specs(config)) {
    Tensor t(s.shape);
    switch (s.init) {
      case InitKind::ones: t.fill(1.0); break;
      case InitKind::zeros: break;
      case InitKind::he_uniform: {
        const double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : t.storage()) v = dist(rng);
        break;
      }
    }
    params.add(s.name, std::move(t), s.trainable);
  }
  return params;
}

Model::Model(ModelConfig config, Parameters params)
    : config_(std::move(config)), frontend_(config_.frontend), params_(std::move(params)) {
  config_.validate();
  const auto specs = parameter_specs(config_);
  if (specs.size() != params_.size())
    throw std::invalid_argument("checkpoint has " + std::to_string(params_.size()) + " parameters, config implies " +
                                std::to_string(specs.size()));
  for (const auto& s : specs) {
    if (!params_.contains(s.name)) throw std::invalid_argument("checkpoint is missing parameter " + s.name);
    const auto& p = params_.at(s.name);
    if (p.value.shape() != s.shape)
      throw std::invalid_argument("parameter " + s.name + " has shape " + to_string(p.value.shape()) + ", expected " +
                                  to_string(s.shape));
    if (p.trainable != s.trainable) throw std::invalid_argument("parameter " + s.name + " has the wrong trainable flag");
  }
}

std::size_t Model::min_samples() const {
  std::size_t frames = 1;
  if (config_.architecture == Architecture::cnn) {
    frames = 16;  // four halvings by max pooling
  } else {
    for (const auto& l : config_.tdnn.frame_layers) frames += (l.context - 1) * l.dilation;
  }
  return config_.frontend.frame_length + (frames - 1) * config_.frontend.hop_length;
}

Var Model::batch_norm(Graph& g, Var x, const std::string& prefix, bool training, BatchStatsMap* stats) const {
  Var gamma = g.parameter(params_, prefix + ".gamma");
  Var beta = g.parameter(params_, prefix + ".beta");
  if (training) {
    if (!stats) return ops::batch_norm_train(x, gamma, beta, kBatchNormEps);
    return ops::batch_norm_train(x, gamma, beta, kBatchNormEps, &(*stats)[prefix]);
  }
  return ops::batch_norm_eval(x, gamma, beta, params_.value(prefix + ".running_mean"),
                              params_.value(prefix + ".running_var"), kBatchNormEps);
}

Var Model::forward(Graph& g, Var waveforms, bool training, BatchStatsMap* stats) const {
  if (waveforms.shape().size() != 2) throw ShapeError("model input must be [B, N], got " + to_string(waveforms.shape()));
  if (waveforms.shape()[1] < min_samples())
    throw std::invalid_argument("waveform of " + std::to_string(waveforms.shape()[1]) + " samples is shorter than the " +
                                std::to_string(min_samples()) + " this model needs");
  Var h = frontend_.log_mel(waveforms);  // [B, n_mels, T]
  if (config_.architecture == Architecture::cnn) {
    for (std::size_t l = 0; l < config_.cnn.channels.size(); ++l) {
      const std::string conv = "cnn." + layer_name("conv", l);
      h = ops::conv1d(h, g.parameter(params_, conv + ".weight"), g.parameter(params_, conv + ".bias"), 1,
                      (config_.cnn.kernels[l] - 1) / 2);
      h = ops::relu(h);
      h = batch_norm(g, h, "cnn." + layer_name("bn", l), training, stats);
      if (l % 2 == 1) h = ops::max_pool1d(h, 2);
    }
    h = ops::mean_over_time(h);
  } else {
    for (std::size_t l = 0; l < config_.tdnn.frame_layers.size(); ++l) {
      const std::string conv = "tdnn." + layer_name("frame", l);
      h = ops::conv1d(h, g.parameter(params_, conv + ".weight"), g.parameter(params_, conv + ".bias"),
                      config_.tdnn.frame_layers[l].dilation, 0);
      h = ops::relu(h);
      h = batch_norm(g, h, "tdnn." + layer_name("frame_bn", l), training, stats);
    }
    h = ops::stats_pool(h);
    for (std::size_t l = 0; l < config_.tdnn.segment_layers.size(); ++l) {
      const std::string seg = "tdnn." + layer_name("segment", l);
      h = ops::linear(h, g.parameter(params_, seg + ".weight"), g.parameter(params_, seg + ".bias"));
      h = ops::relu(h);
      h = batch_norm(g, h, "tdnn." + layer_name("segment_bn", l), training, stats);
    }
  }
  Var logits = ops::linear(h, g.parameter(params_, "head.weight"), g.parameter(params_, "head.bias"));
  return ops::log_softmax(logits);
}

void Model::update_running_stats(const BatchStatsMap& batch_stats, double momentum) {
  for (const auto& [prefix, s] : batch_stats) {
    Tensor& rm = params_.value(prefix + ".running_mean");
    Tensor& rv = params_.value(prefix + ".running_var");
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = momentum * rm[c] + (1.0 - momentum) * s.mean[c];
      rv[c] = momentum * rv[c] + (1.0 - momentum) * s.var[c];
    }
  }
}

Model build_model(const ModelConfig& config) { return Model(config, init_parameters(config)); }

Model build_cnn(const CnnConfig& cnn, const FrontendConfig& frontend, std::uint64_t seed) {
  ModelConfig c;
  c.architecture = Architecture::cnn;
  c.cnn = cnn;
  c.frontend = frontend;
  c.seed = seed;
  return build_model(c);
}

Model build_tdnn(const TdnnConfig& tdnn, const FrontendConfig& frontend, std::uint64_t seed) {
  ModelConfig c;
  c.architecture = Architecture::tdnn;
  c.tdnn = tdnn;
  c.frontend = frontend;
  c.seed = seed;
  return build_model(c);
}

std::size_t cnn_parameter_count(const CnnConfig& cnn, std::size_t n_mels) {
  std::size_t total = 0, in = n_mels;
  for (std::size_t l = 0; l < cnn.channels.size(); ++l) {
    const std::size_t out = cnn.channels[l];
    total += cnn.kernels[l] * in * out + out + 2 * out;
    in = out;
  }
  return total + in * cnn.n_classes + cnn.n_classes;
}

std::size_t tdnn_parameter_count(const TdnnConfig& tdnn, std::size_t n_mels) {
  std::size_t total = 0, in = n_mels;
  for (const auto& l : tdnn.frame_layers) {
    total += l.context * in * l.channels + l.channels + 2 * l.channels;
    in = l.channels;
  }
  in *= 2;
  for (auto out : tdnn.segment_layers) {
    total += in * out + out + 2 * out;
    in = out;
  }
  return total + in * tdnn.n_classes + tdnn.n_classes;
}

namespace {
constexpr char kModelMagic[8] = {'A', 'D', 'V', 'S', 'P', 'K', 'M', 'D'};
}

void save_model(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string cfg = to_json(model.config());
  const std::uint32_t version = kModelFormatVersion, length = static_cast<std::uint32_t>(cfg.size());
  out.write(kModelMagic, sizeof kModelMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_parameters(out, model.parameters());
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0, length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw FormatError(path.string() + " is not a model checkpoint");
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model checkpoint version " + std::to_string(version));
  if (length > (1u << 24)) throw FormatError("implausible config block length in " + path.string());
  std::string cfg(length, '\0');
  in.read(cfg.data(), length);
  if (!in) throw FormatError("truncated checkpoint " + path.string());
  ModelConfig config = parse_model_config(cfg);
  Parameters params = read_parameters(in);
  return Model(std::move(config), std::move(params));
}

Tensor stack_waveforms(std::span<const std::vector<double>> waveforms) {
  if (waveforms.empty()) throw std::invalid_argument("cannot stack an empty batch");
  const std::size_t n = waveforms.front().size();
  std::vector<double> data;
  data.reserve(n * waveforms.size());
  for (const auto& w : waveforms) {
    if (w.size() != n) throw ShapeError("waveforms in a batch must share a length");
    data.insert(data.end(), w.begin(), w.end());
  }
  return Tensor({waveforms.size(), n}, std::move(data));
}

Tensor infer_log_posteriors(const Classifier& model, std::span<const std::vector<double>> waveforms,
                            std::size_t batch_size) {
  if (waveforms.empty()) throw std::invalid_argument("no waveforms to classify");
  batch_size = std::max<std::size_t>(batch_size, 1);
  const std::size_t classes = model.n_classes();
  Tensor out({waveforms.size(), classes});
  std::size_t start = 0;
  while (start < waveforms.size()) {
    std::size_t end = start + 1;
    while (end < waveforms.size() && end - start < batch_size && waveforms[end].size() == waveforms[start].size()) ++end;
    Graph g(false);
    Var x = g.constant(stack_waveforms(waveforms.subspan(start, end - start)));
    const Tensor& lp = model.log_posteriors(g, x).value();
    std::copy(lp.raw(), lp.raw() + lp.size(), out.raw() + start * classes);
    start = end;
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("argmax_rows expects [B, C], got " + to_string(scores.shape()));
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (scores[r * cols + c] > scores[r * cols + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const Classifier& model, std::span<const std::vector<double>> waveforms,
                         std::size_t batch_size) {
  return argmax_rows(infer_log_posteriors(model, waveforms, batch_size));
}

}  // namespace advspk
