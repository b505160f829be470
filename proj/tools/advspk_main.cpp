#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "advspk/bench.hpp"

namespace fs = std::filesystem;
using namespace advspk;
using namespace advspk::bench;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string output;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "Experiment config (JSON); defaults apply when omitted");
  cmd->add_option("-s,--set", c.overrides, "Override a config field, e.g. --set optimizer.epochs=5")->allow_extra_args(false);
  cmd->add_option("-o,--output", c.output, "Output directory (same as --set output_dir=...)");
  cmd->add_flag("-f,--force", c.force, "Overwrite existing outputs");
  cmd->add_flag("-q,--quiet", c.quiet, "No progress lines");
}

ExperimentConfig resolve(const Common& c) {
  auto overrides = c.overrides;
  if (!c.output.empty()) overrides.push_back("output_dir=" + c.output);
  return load_experiment_config(c.config, overrides);
}

RunOptions options_of(const Common& c) { return {.force = c.force, .log = c.quiet ? nullptr : &std::cerr}; }

void print_attack_summary(const ExperimentReport& r) {
  std::cout << "benign accuracy " << r.benign_accuracy << " over " << r.samples << " utterances\n";
  for (const auto& a : r.attacks)
    std::cout << to_string(a.kind) << " @ " << a.strength << ": accuracy " << a.adversarial_accuracy << ", SNR "
              << a.snr_db.mean << " dB, LSD " << a.lsd_db.mean << " dB" << (a.failed ? ", failed " : "")
              << (a.failed ? std::to_string(a.failed) : "") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial attacks and defenses for speaker identification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "advspk 0.1.0");

  Common common;
  std::string checkpoint, source, target, original, perturbed, directory;
  std::vector<std::string> arms;
  bool both = false;

  auto* train = app.add_subcommand("train", "Train a model with the configured defense");
  add_common(train, common);

  auto* attack = app.add_subcommand("attack", "Attack the test split with every configured attack and strength");
  add_common(attack, common);
  attack->add_option("checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Accuracy and quality curves over the strength grids, one arm per defense");
  add_common(sweep, common);
  sweep->add_option("arms", arms, "Defense arms as name=checkpoint")->required();

  auto* pgd_iters = app.add_subcommand("pgd-iters", "Adversarial accuracy versus PGD iteration count");
  add_common(pgd_iters, common);
  pgd_iters->add_option("checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);

  auto* transfer = app.add_subcommand("transfer", "Replay adversarial samples crafted on one model against another");
  add_common(transfer, common);
  transfer->add_option("source", source, "Source checkpoint")->required()->check(CLI::ExistingFile);
  transfer->add_option("target", target, "Target checkpoint")->required()->check(CLI::ExistingFile);
  transfer->add_flag("-b,--both", both, "Also transfer from target to source");

  auto* spectrogram = app.add_subcommand("spectrogram", "Dump log-mel spectrograms of two WAV files and their SNR/LSD");
  add_common(spectrogram, common);
  spectrogram->add_option("original", original, "Clean WAV")->required()->check(CLI::ExistingFile);
  spectrogram->add_option("perturbed", perturbed, "Perturbed WAV")->required()->check(CLI::ExistingFile);

  auto* similarity = app.add_subcommand("similarity", "Misclassification similarity matrices per epsilon");
  add_common(similarity, common);
  similarity->add_option("checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "Recompute report.json accuracies from manifest.csv");
  verify->add_option("directory", directory, "Output directory of an attack run")->required()->check(CLI::ExistingDirectory);

  auto* config = app.add_subcommand("config", "Print the resolved experiment config as JSON");
  add_common(config, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_line("usage_error", e.what()) << '\n';
    return 2;
  }

  try {
    if (verify->parsed()) {
      const VerifyResult v = cmd_verify(directory);
      for (const auto& m : v.messages) std::cout << m << '\n';
      if (!v.ok) {
        std::cerr << error_line("verify_failed", v.messages.empty() ? "mismatch" : v.messages.front()) << '\n';
        return 1;
      }
      return 0;
    }
    const ExperimentConfig cfg = resolve(common);
    const RunOptions opts = options_of(common);
    if (config->parsed()) {
      std::cout << to_json(cfg) << '\n';
    } else if (train->parsed()) {
      const TrainOutcome t = cmd_train(cfg, opts);
      std::cout << "checkpoint " << t.checkpoint.string() << " (" << t.checkpoint_sha1 << "), benign accuracy "
                << t.benign_accuracy << '\n';
    } else if (attack->parsed()) {
      print_attack_summary(cmd_attack(cfg, checkpoint, opts));
    } else if (sweep->parsed()) {
      std::vector<std::pair<std::string, fs::path>> list;
      for (const auto& a : arms) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw BenchError("missing_arm", "arm \"" + a + "\" is not of the form name=checkpoint");
        list.emplace_back(a.substr(0, eq), a.substr(eq + 1));
      }
      for (const auto& r : cmd_sweep(cfg, list, opts))
        std::cout << r.defense << ' ' << to_string(r.attack) << " @ " << r.strength << ": " << r.adversarial_accuracy << '\n';
    } else if (pgd_iters->parsed()) {
      for (const auto& r : cmd_pgd_iters(cfg, checkpoint, opts))
        std::cout << "eps " << r.epsilon << " T " << r.iterations << ": " << r.adversarial_accuracy << '\n';
    } else if (transfer->parsed()) {
      for (const auto& r : cmd_transfer(cfg, source, target, both, opts))
        std::cout << r.source << " -> " << r.target << ' ' << to_string(r.attack) << " @ " << r.strength << ": source "
                  << r.source_adversarial_accuracy << ", target " << r.target_transfer_accuracy << " (benign "
                  << r.target_benign_accuracy << ")\n";
    } else if (spectrogram->parsed()) {
      const SpectrogramStats s = cmd_spectrogram(original, perturbed, cfg, opts);
      std::cout << "SNR " << s.snr_db << " dB, LSD " << s.lsd_db << " dB\n";
    } else if (similarity->parsed()) {
      for (const auto& r : cmd_similarity(cfg, checkpoint, opts)) {
        std::cout << "eps " << r.strength << '\n';
        for (std::size_t i = 0; i < r.matrix.n; ++i) {
          std::cout << "  " << to_string(r.attacks[i]);
          for (std::size_t j = 0; j < r.matrix.n; ++j) {
            const auto& v = r.matrix.at(i, j);
            std::cout << ' ' << (v ? std::to_string(*v) : std::string("undefined"));
          }
          std::cout << '\n';
        }
      }
    }
  } catch (const BenchError& e) {
    std::cerr << error_line(e.code(), e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << error_line("internal_error", e.what()) << '\n';
    return 1;
  }
  return 0;
}
