#pragma once

#include "fedunlearn/config.hpp"
#include "fedunlearn/sweeps.hpp"

namespace fedunlearn {

// Everything derived from a config before any training happens.
struct Workbench {
  LabeledDataset clean_train;
  LabeledDataset train_set;  // equals clean_train unless the backdoor is enabled
  LabeledDataset test_set;
  LabeledDataset forget_test;
  LabeledDataset retain_test;
  ClientPartition partition;
  std::vector<ClientState> clients;
  ParamVector initial_model;
  ForgetSpec forget_spec;
  BackdoorSpec backdoor;  // resolved defaults even when disabled
  int poisoned_count = 0;

  EvalContext eval(bool with_backdoor = false) const;
};

BackdoorSpec resolve_backdoor(const ExperimentConfig& cfg);

Workbench prepare_workbench(const ExperimentConfig& cfg);

// Stops once the size-weighted accuracy over both test splits reaches threshold.
StopPredicate stop_on_overall_accuracy(const Workbench& wb, double threshold);
StopPredicate stop_on_retained_accuracy(double threshold);

// Initial federated training on wb.clients, starting from wb.initial_model.
FLRunResult train_phase(Workbench& wb, const ExperimentConfig& cfg, bool with_backdoor = false);

// Retraining baseline: fresh clients without the forgotten classes, fresh model
// from the same init seed, trained until retained accuracy reaches the stop rule.
FLRunResult retrain_phase(const Workbench& wb, const ExperimentConfig& cfg);

// Runs the configured experiment and writes all artifacts into cfg.output_dir.
// Returns 0 when the experiment's thresholds were met, 1 when not, 2 on a
// pipeline error (an ERROR.txt marker is left next to any partial artifacts).
int run_experiment(const ExperimentConfig& cfg);

}  // namespace fedunlearn
