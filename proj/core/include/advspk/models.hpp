#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advspk/frontend.hpp"
#include "advspk/graph.hpp"
#include "advspk/ops.hpp"
#include "advspk/parameters.hpp"

namespace advspk {

/// Anything that maps waveforms to log-posteriors with frozen parameters.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t n_classes() const = 0;
  /// [B, N] waveforms -> [B, n_classes] log-posteriors (evaluation mode).
  virtual Var log_posteriors(Graph& graph, Var waveforms) const = 0;
};

enum class Architecture { cnn, tdnn };
std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

struct CnnConfig {
  std::size_t n_classes = 10;
  std::vector<std::size_t> channels = {64, 64, 96, 96, 128, 128, 128, 32};
  std::vector<std::size_t> kernels = {3, 3, 3, 3, 3, 3, 3, 3};

  void validate() const;
  friend bool operator==(const CnnConfig&, const CnnConfig&) = default;
};

struct TdnnLayer {
  std::size_t channels = 0;
  std::size_t context = 1;
  std::size_t dilation = 1;
  friend bool operator==(const TdnnLayer&, const TdnnLayer&) = default;
};

struct TdnnConfig {
  std::size_t n_classes = 10;
  std::vector<TdnnLayer> frame_layers = {{512, 5, 1}, {512, 3, 2}, {512, 3, 3}, {512, 1, 1}, {1500, 1, 1}};
  std::vector<std::size_t> segment_layers = {512, 512};

  void validate() const;
  friend bool operator==(const TdnnConfig&, const TdnnConfig&) = default;
};

struct ModelConfig {
  Architecture architecture = Architecture::cnn;
  FrontendConfig frontend;
  CnnConfig cnn;
  TdnnConfig tdnn;
  std::uint64_t seed = 0;

  std::size_t n_classes() const;
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string to_json(const ModelConfig& config);
ModelConfig parse_model_config(std::string_view json);

using BatchStatsMap = std::map<std::string, ops::BatchStats>;

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

class Model : public Classifier {
 public:
  /// Throws std::invalid_argument when params do not match the shapes implied by config.
  Model(ModelConfig config, Parameters params);

  const ModelConfig& config() const { return config_; }
  Architecture architecture() const { return config_.architecture; }
  const Frontend& frontend() const { return frontend_; }
  const Parameters& parameters() const { return params_; }
  Parameters& parameters() { return params_; }
  std::size_t n_classes() const override { return config_.n_classes(); }
  /// Shortest waveform the network accepts.
  std::size_t min_samples() const;

  Var log_posteriors(Graph& graph, Var waveforms) const override { return forward(graph, waveforms, false); }
  /// In training mode batch norm uses batch statistics, which are written to
  /// batch_stats when given; otherwise running statistics are used.
  Var forward(Graph& graph, Var waveforms, bool training, BatchStatsMap* batch_stats = nullptr) const;
  /// running = momentum * running + (1 - momentum) * batch
  void update_running_stats(const BatchStatsMap& batch_stats, double momentum = kBatchNormMomentum);

 private:
  Var batch_norm(Graph& graph, Var x, const std::string& prefix, bool training, BatchStatsMap* stats) const;

  ModelConfig config_;
  Frontend frontend_;
  Parameters params_;
};

/// Parameters for config with He-uniform weights, zero biases, unit gamma and
/// zero beta, drawn from config.seed.
Parameters init_parameters(const ModelConfig& config);
Model build_model(const ModelConfig& config);
Model build_cnn(const CnnConfig& cnn, const FrontendConfig& frontend = {}, std::uint64_t seed = 0);
Model build_tdnn(const TdnnConfig& tdnn, const FrontendConfig& frontend = {}, std::uint64_t seed = 0);

/// Closed-form trainable parameter counts.
std::size_t cnn_parameter_count(const CnnConfig& cnn, std::size_t n_mels);
std::size_t tdnn_parameter_count(const TdnnConfig& tdnn, std::size_t n_mels);

/// Checkpoint: magic "ADVSPKMD", u32 version, u32 config length, JSON model
/// config, then the parameter container.
inline constexpr std::uint32_t kModelFormatVersion = 1;
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

/// Stacks equal-length waveforms into [B, N].
Tensor stack_waveforms(std::span<const std::vector<double>> waveforms);
/// Log-posteriors [n, C] computed in chunks of equal-length waveforms.
Tensor infer_log_posteriors(const Classifier& model, std::span<const std::vector<double>> waveforms,
                            std::size_t batch_size = 32);
/// Index of the largest entry of each row; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& scores);
std::vector<int> predict(const Classifier& model, std::span<const std::vector<double>> waveforms,
                         std::size_t batch_size = 32);

}  // namespace advspk
