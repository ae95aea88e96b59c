#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedunlearn/federation.hpp"
#include "fedunlearn/unlearning.hpp"

namespace fedunlearn {

struct DataConfig {
  int num_classes = 10;
  int feature_dim = 16;
  int train_per_class = 200;
  int test_per_class = 50;
  double spread = 0.25;
  double beta = 0.5;  // Dirichlet concentration for the client partition
  std::uint64_t seed = 11;
  std::uint64_t partition_seed = 12;
};

struct ModelConfig {
  std::vector<int> hidden_sizes{32};
  std::uint64_t init_seed = 13;
};

struct BackdoorConfig {
  bool enabled = false;
  std::vector<int> trigger_mask;          // empty: the last three feature dims
  std::optional<double> trigger_value;    // unset: 6 * data.spread
  std::optional<int> attack_target;       // unset: the first target class
  double poison_fraction = 0.5;
  std::uint64_t seed = 14;
  double asr_before_min = 0.7;  // thresholds the backdoor-eval experiment must meet
  double asr_after_max = 0.05;
};

enum class ExperimentKind { Train, Unlearn, Retrain, BackdoorEval, Ablation, AlphaSweep, MultiClass };

std::string to_string(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Unlearn;
  std::string output_dir = "out";
  DataConfig data;
  ModelConfig model;
  FLConfig fl;
  UnlearnConfig unlearn;
  std::vector<int> target_classes{5};
  int resume_rounds = 5;
  std::vector<double> sweep_alphas;  // empty: {1, default alpha, 10 * default alpha}
  BackdoorConfig backdoor;
};

// Parses the JSON config file, applies defaults for absent keys, rejects
// unknown keys, and validates ranges.  Diagnostics carry the offending key path.
ExperimentConfig load_config(const std::string& path);

void validate(const ExperimentConfig& cfg);

// Resolved-config snapshot; load_config(save) round-trips.
std::string to_json(const ExperimentConfig& cfg);

// Replaces every named seed with a value derived from one base seed.
void override_seeds(ExperimentConfig& cfg, std::uint64_t base);

}  // namespace fedunlearn
