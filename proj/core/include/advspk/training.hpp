#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "advspk/corpus.hpp"
#include "advspk/models.hpp"

namespace advspk {

struct OptimizerConfig {
  double learning_rate = 0.001;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 128;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  /// Training crop length; utterances shorter than this are used whole.
  double crop_seconds = 2.0;

  void validate() const;
};

class Adam {
 public:
  explicit Adam(const OptimizerConfig& config);
  /// Updates every trainable parameter that has an entry in grads.
  void step(Parameters& params, const std::map<std::string, Tensor>& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

struct TrainBatch {
  Tensor waveforms;  // [B, N]
  std::vector<int> labels;
};

/// What a training objective returns for one minibatch.
struct StepLoss {
  Var total;            // scalar minimized by the optimizer
  double clean_loss = 0.0;
  double aux_loss = 0.0;  // adversarial or regularizer term
  Var clean_log_posteriors;  // rows beyond the batch size are ignored when scoring accuracy
};

/// Builds the minibatch objective. batch_stats collects the statistics the
/// running batch-norm averages are updated with after the step.
using LossFn = std::function<StepLoss(Graph& graph, const Model& model, const TrainBatch& batch,
                                      BatchStatsMap& batch_stats)>;

struct EpochRecord {
  std::size_t epoch = 0;
  double clean_loss = 0.0;
  double aux_loss = 0.0;
  double total_loss = 0.0;
  double accuracy = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
};

/// Shuffles, crops and batches the dataset each epoch, minimizing loss with
/// Adam. A trailing batch of one sample is folded into the previous batch so
/// batch statistics stay defined.
TrainTrace train_with_loss(Model& model, const Dataset& data, const OptimizerConfig& config, const LossFn& loss);

/// Cross-entropy in training mode.
StepLoss erm_loss(Graph& graph, const Model& model, const TrainBatch& batch, BatchStatsMap& batch_stats);
TrainTrace train_erm(Model& model, const Dataset& data, const OptimizerConfig& config);

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace);

/// Throws std::invalid_argument when data is empty or a label is outside
/// [0, n_classes).
void check_training_data(const Dataset& data, std::size_t n_classes);

}  // namespace advspk
