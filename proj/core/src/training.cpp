#include "advspk/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace advspk {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("optimizer: learning_rate must be positive");
  if (!(beta1 > 0 && beta1 < 1)) throw std::invalid_argument("optimizer: beta1 must lie in (0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) throw std::invalid_argument("optimizer: beta2 must lie in (0, 1)");
  if (!(adam_eps > 0)) throw std::invalid_argument("optimizer: adam_eps must be positive");
  if (batch_size == 0) throw std::invalid_argument("optimizer: batch_size must be positive");
  if (!(crop_seconds > 0)) throw std::invalid_argument("optimizer: crop_seconds must be positive");
}

Adam::Adam(const OptimizerConfig& c) : lr_(c.learning_rate), b1_(c.beta1), b2_(c.beta2), eps_(c.adam_eps) {}

void Adam::step(Parameters& params, const std::map<std::string, Tensor>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (!p.trainable) continue;
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    auto [mi, fresh_m] = m_.try_emplace(name, p.value.shape());
    auto [vi, fresh_v] = v_.try_emplace(name, p.value.shape());
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void check_training_data(const Dataset& data, std::size_t n_classes) {
  if (data.empty()) throw std::invalid_argument("training set is empty");
  for (const auto& s : data.samples)
    if (s.speaker_label < 0 || static_cast<std::size_t>(s.speaker_label) >= n_classes)
      throw std::invalid_argument("utterance " + s.utterance_id + " has label " + std::to_string(s.speaker_label) +
                                  " outside [0, " + std::to_string(n_classes) + ")");
}

TrainTrace train_with_loss(Model& model, const Dataset& data, const OptimizerConfig& config, const LossFn& loss) {
  config.validate();
  check_training_data(data, model.n_classes());
  TrainTrace trace;
  if (config.epochs == 0) return trace;

  std::size_t shortest = data.samples.front().waveform.size();
  for (const auto& s : data.samples) shortest = std::min(shortest, s.waveform.size());
  const auto crop_request =
      static_cast<std::size_t>(std::llround(config.crop_seconds * model.config().frontend.sample_rate));
  const std::size_t crop = std::min(crop_request, shortest);
  if (crop < model.min_samples())
    throw std::invalid_argument("training crop of " + std::to_string(crop) + " samples is shorter than the model minimum " +
                                std::to_string(model.min_samples()));

  std::mt19937_64 rng(config.seed);
  Adam adam(config);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> offsets(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      const std::size_t len = data.samples[order[i]].waveform.size();
      offsets[i] = len > crop ? std::uniform_int_distribution<std::size_t>(0, len - crop)(rng) : 0;
    }

    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t s = 0; s < order.size(); s += config.batch_size)
      batches.emplace_back(s, std::min(order.size(), s + config.batch_size));
    if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
      batches.pop_back();
      batches.back().second = order.size();
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    std::size_t correct = 0;
    for (const auto& [begin, end] : batches) {
      TrainBatch batch;
      std::vector<double> buf;
      buf.reserve((end - begin) * crop);
      for (std::size_t i = begin; i < end; ++i) {
        const auto& s = data.samples[order[i]];
        buf.insert(buf.end(), s.waveform.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                   s.waveform.begin() + static_cast<std::ptrdiff_t>(offsets[i] + crop));
        batch.labels.push_back(s.speaker_label);
      }
      batch.waveforms = Tensor({end - begin, crop}, std::move(buf));

      Graph g;
      BatchStatsMap stats;
      StepLoss step = loss(g, model, batch, stats);
      g.backward(step.total);
      const auto grads = g.parameter_grads();
      adam.step(model.parameters(), grads);
      model.update_running_stats(stats);

      const double n = static_cast<double>(end - begin);
      rec.clean_loss += step.clean_loss * n;
      rec.aux_loss += step.aux_loss * n;
      rec.total_loss += step.total.value().item() * n;
      if (step.clean_log_posteriors.valid()) {
        const auto pred = argmax_rows(step.clean_log_posteriors.value());
        for (std::size_t i = 0; i < batch.labels.size() && i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
      }
    }
    const double total = static_cast<double>(order.size());
    rec.clean_loss /= total;
    rec.aux_loss /= total;
    rec.total_loss /= total;
    rec.accuracy = static_cast<double>(correct) / total;
    trace.epochs.push_back(rec);
  }
  return trace;
}

StepLoss erm_loss(Graph& g, const Model& model, const TrainBatch& batch, BatchStatsMap& stats) {
  Var x = g.constant_ref(batch.waveforms);
  Var lp = model.forward(g, x, true, &stats);
  Var ce = ops::nll_loss(lp, batch.labels);
  StepLoss out;
  out.total = ce;
  out.clean_loss = ce.value().item();
  out.clean_log_posteriors = lp;
  return out;
}

TrainTrace train_erm(Model& model, const Dataset& data, const OptimizerConfig& config) {
  return train_with_loss(model, data, config, erm_loss);
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "epoch,clean_loss,aux_loss,total_loss,train_accuracy\n";
  for (const auto& r : trace.epochs)
    out << r.epoch << ',' << r.clean_loss << ',' << r.aux_loss << ',' << r.total_loss << ',' << r.accuracy << '\n';
}

}  // namespace advspk
