#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "advspk/attacks.hpp"
#include "advspk/corpus.hpp"
#include "advspk/defenses.hpp"
#include "advspk/metrics.hpp"
#include "advspk/models.hpp"
#include "advspk/training.hpp"

namespace advspk::bench {

/// Error carrying a stable machine-readable code, e.g. "config_invalid".
class BenchError : public std::runtime_error {
 public:
  BenchError(std::string code, const std::string& message) : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Single-line JSON object {"error": code, "message": ...} for stderr.
std::string error_line(std::string_view code, std::string_view message);

enum class CorpusSource { synth, wav_dir };

struct CorpusSpec {
  CorpusSource source = CorpusSource::synth;
  SynthSpec synth;
  std::filesystem::path wav_dir;
  double train_fraction = 0.9;
  std::uint64_t split_seed = 1;
};

enum class DefenseKind { none, adv_fgsm, adv_pgd, alr, noise };
std::string_view to_string(DefenseKind kind);
DefenseKind parse_defense_kind(std::string_view name);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::none;
  double w_at = 0.5;
  /// Inner attack of adversarial training; the kind follows `kind`.
  AttackConfig inner_attack = [] {
    AttackConfig a;
    a.iterations = 10;
    return a;
  }();
  /// Optimizer fields other than epochs come from the experiment optimizer.
  AlrConfig alr;
  /// ALR epochs as a multiple of the experiment epoch budget.
  std::size_t alr_epoch_multiplier = 10;
  double noise_sigma = 0.002;
};

/// One attack and its strength grid: epsilon for l-infinity attacks, the
/// confidence margin delta for cw_l2.
struct AttackSpec {
  AttackConfig config;
  std::vector<double> strengths;
};
/// Applies a grid value to the field it controls.
AttackConfig at_strength(const AttackSpec& spec, double strength);

struct ExperimentConfig {
  CorpusSpec corpus;
  ModelConfig model;
  OptimizerConfig optimizer;
  DefenseSpec defense;
  std::vector<AttackSpec> attacks;
  std::vector<std::size_t> pgd_iterations = {10, 20, 30, 50, 100};
  /// Attacks applied to each strength by the similarity command.
  std::vector<AttackKind> similarity_attacks = {AttackKind::fgsm, AttackKind::pgd, AttackKind::cw_linf,
                                                AttackKind::cw_l2};
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "advspk-out";
  std::size_t threads = 0;
  /// Evaluate only the first N test utterances; 0 evaluates all.
  std::size_t max_eval_samples = 0;
  bool dump_wav = false;

  /// Every violated constraint, empty when the config is usable.
  std::vector<std::string> problems() const;
  /// Throws BenchError("config_invalid") listing all problems at once.
  void validate() const;
};

/// The desk-scale default experiment with the l-infinity and cw_l2 grids.
ExperimentConfig default_experiment();

std::string to_json(const ExperimentConfig& config, int indent = 2);
/// Missing fields take their defaults; unknown fields are rejected.
ExperimentConfig parse_experiment_config(std::string_view json);
/// Reads a config file (or the defaults when path is empty) and applies
/// "dotted.path=value" overrides, where value is parsed as JSON and falls back
/// to a string.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

/// output_dir, resolved against $ADVSPK_OUTPUT_ROOT when relative and the
/// variable is set.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

/// Lowercase hex SHA-1 of "blob <size>\0<content>", as git hash-object computes.
std::string git_blob_sha1(const std::filesystem::path& file);
std::string git_blob_sha1_bytes(std::string_view content);

struct RunOptions {
  bool force = false;
  /// Progress lines go here when set.
  std::ostream* log = nullptr;
};

struct Corpora {
  Dataset train;
  Dataset test;
};
/// Builds or loads the corpus and splits it; test is truncated to max_eval_samples.
Corpora load_corpora(const ExperimentConfig& config);

/// Trains according to config.defense; dispatches to train_erm for none.
DefenseTrace train_defended(Model& model, const Dataset& train, const ExperimentConfig& config);

struct TrainOutcome {
  std::filesystem::path checkpoint;
  std::string checkpoint_sha1;
  double benign_accuracy = 0.0;
  DefenseTrace trace;
};
/// Writes model.ckpt, train_log.csv and train_report.json to the output dir.
TrainOutcome cmd_train(const ExperimentConfig& config, const RunOptions& options = {});

struct AttackSummary {
  AttackKind kind = AttackKind::fgsm;
  double strength = 0.0;
  std::size_t samples = 0;
  std::size_t failed = 0;
  double adversarial_accuracy = 0.0;
  /// Over samples with a nonzero perturbation.
  MeanStd snr_db;
  MeanStd lsd_db;
};

struct ManifestRow {
  std::string attack;  // "benign" for the clean pass
  double strength = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  std::size_t iterations = 0;
  std::size_t index = 0;
  std::string utterance_id;
  int label = 0;
  int benign_prediction = 0;
  int adversarial_prediction = 0;
  double linf = 0.0;
  double l2 = 0.0;
  double snr_db = 0.0;
  double lsd_db = 0.0;
  bool success = false;
  std::string error;
};

struct ExperimentReport {
  double benign_accuracy = 0.0;
  std::size_t samples = 0;
  std::vector<AttackSummary> attacks;
  std::string checkpoint_sha1;
  double runtime_seconds = 0.0;
  std::vector<ManifestRow> manifest;
};

/// Attacks the test split with every configured attack and strength, writing
/// report.json and manifest.csv. The checkpoint architecture must match the
/// config before any attack runs.
ExperimentReport cmd_attack(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                            const RunOptions& options = {});
/// In-memory evaluation used by cmd_attack; adversarial audio is written under
/// wav_dir when it is not empty.
ExperimentReport evaluate_attacks(const Model& model, const Dataset& test, const ExperimentConfig& config,
                                  const std::filesystem::path& wav_dir = {});

struct SweepRow {
  std::string defense;
  AttackKind attack = AttackKind::fgsm;
  double strength = 0.0;
  std::size_t samples = 0;
  double adversarial_accuracy = 0.0;
  double mean_snr_db = 0.0;
  double mean_lsd_db = 0.0;
};
/// One checkpoint per defense arm; writes sweep.csv.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config,
                                const std::vector<std::pair<std::string, std::filesystem::path>>& arms,
                                const RunOptions& options = {});

struct PgdIterationRow {
  double epsilon = 0.0;
  std::size_t iterations = 0;
  double adversarial_accuracy = 0.0;
};
/// Runs PGD once per epsilon for the largest iteration count and scores the
/// iterate at every count in the grid, which equals separate runs because PGD
/// iterates form a prefix sequence.
std::vector<PgdIterationRow> pgd_iteration_study(const Classifier& model, const Dataset& test,
                                                 const AttackConfig& pgd, std::span<const double> epsilons,
                                                 std::span<const std::size_t> iterations, std::size_t threads = 0);
std::vector<PgdIterationRow> cmd_pgd_iters(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                                           const RunOptions& options = {});

struct TransferRow {
  std::string source;
  std::string target;
  AttackKind attack = AttackKind::fgsm;
  double strength = 0.0;
  std::size_t samples = 0;
  double source_benign_accuracy = 0.0;
  double source_adversarial_accuracy = 0.0;
  double target_benign_accuracy = 0.0;
  double target_transfer_accuracy = 0.0;
};
/// Crafts adversarial samples on source and replays them against target.
std::vector<TransferRow> transfer_eval(const Model& source, const Model& target, const Dataset& test,
                                       const AttackSpec& attack, std::size_t threads = 0,
                                       std::string_view source_name = "source", std::string_view target_name = "target");
std::vector<TransferRow> cmd_transfer(const ExperimentConfig& config, const std::filesystem::path& source,
                                      const std::filesystem::path& target, bool both_directions,
                                      const RunOptions& options = {});

struct SpectrogramStats {
  Tensor original;   // [n_mels, n_frames]
  Tensor perturbed;
  double snr_db = 0.0;
  double lsd_db = 0.0;
};
/// Writes original.csv, perturbed.csv and stats.json into output_dir.
SpectrogramStats cmd_spectrogram(const std::filesystem::path& original, const std::filesystem::path& perturbed,
                                 const ExperimentConfig& config, const RunOptions& options = {});

struct SimilarityResult {
  double strength = 0.0;
  std::vector<AttackKind> attacks;
  SimilarityMatrix matrix;
};
/// One matrix per epsilon in the first l-infinity attack grid; cw_l2 uses
/// the default margin at every epsilon.
std::vector<SimilarityResult> similarity_study(const Classifier& model, const Dataset& test,
                                               const ExperimentConfig& config);
std::vector<SimilarityResult> cmd_similarity(const ExperimentConfig& config, const std::filesystem::path& checkpoint,
                                             const RunOptions& options = {});

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> messages;
};
/// Recomputes report.json accuracies from manifest.csv in the directory.
VerifyResult cmd_verify(const std::filesystem::path& directory);

}  // namespace advspk::bench
