#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "fedunlearn/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated class unlearning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::int64_t seed_override = -1;
  int max_rounds = -1;
  app.add_option("--config", config_path, "JSON config file; defaults apply when omitted")
      ->check(CLI::ExistingFile);
  app.add_option("--seed-override", seed_override, "Derive every named seed from this base seed");
  app.add_option("--output", output_dir, "Artifact directory (overrides the config)");
  app.add_option("--max-rounds", max_rounds, "Cap on federated training rounds");

  using fedunlearn::ExperimentKind;
  const std::pair<const char*, ExperimentKind> kinds[] = {
      {"train", ExperimentKind::Train},
      {"unlearn", ExperimentKind::Unlearn},
      {"retrain", ExperimentKind::Retrain},
      {"backdoor-eval", ExperimentKind::BackdoorEval},
      {"ablation", ExperimentKind::Ablation},
      {"alpha-sweep", ExperimentKind::AlphaSweep},
      {"multi-class", ExperimentKind::MultiClass},
  };
  for (const auto& [name, kind] : kinds)
    app.add_subcommand(name, "Run the " + std::string(name) + " experiment")->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    fedunlearn::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = fedunlearn::load_config(config_path);
    for (const auto& [name, kind] : kinds)
      if (app.got_subcommand(name)) cfg.experiment = kind;
    if (seed_override >= 0)
      fedunlearn::override_seeds(cfg, static_cast<std::uint64_t>(seed_override));
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (max_rounds >= 0) cfg.fl.max_rounds = max_rounds;
    return fedunlearn::run_experiment(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
