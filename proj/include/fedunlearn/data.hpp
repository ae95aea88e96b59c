#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fedunlearn {

struct LabeledDataset {
  std::vector<std::vector<double>> samples;
  std::vector<int> labels;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  int feature_dim() const { return samples.empty() ? 0 : static_cast<int>(samples.front().size()); }
};

// Index lists into a parent dataset, one per client.  Shards are disjoint,
// cover the dataset, and each is sorted ascending.
struct ClientPartition {
  std::vector<std::vector<int>> client_shards;
};

// Classes to be unlearned.  target_classes is sorted and duplicate free.
struct ForgetSpec {
  std::vector<int> target_classes;

  bool contains(int label) const;
};

// Throws ConfigError unless the spec is a nonempty strict subset of [0, num_classes).
void validate(const ForgetSpec& spec, int num_classes);

struct BackdoorSpec {
  std::vector<int> trigger_mask;   // feature indices overwritten by the trigger
  double trigger_value = 0.0;
  int attack_target = 0;           // class the trigger should elicit
  double poison_fraction = 1.0;
};

// Gaussian blobs, one centroid per class placed on the unit axes (wrapping onto
// scaled axes when num_classes > feature_dim).  Deterministic in (args, seed).
LabeledDataset gen_synthetic(int num_classes, int feature_dim, int n_per_class, double spread,
                             std::uint64_t seed);

// Label-skewed split: per class, client proportions drawn from Dirichlet(beta).
// Empty shards are repaired by moving one sample from the largest shard.
ClientPartition dirichlet_partition(const LabeledDataset& ds, int num_clients, double beta,
                                    std::uint64_t seed);

// (forgotten, retained) per the spec; relative sample order is preserved.
std::pair<LabeledDataset, LabeledDataset> split_forget_retain(const LabeledDataset& shard,
                                                              const ForgetSpec& spec);

struct PoisonResult {
  LabeledDataset dataset;
  int poisoned_count = 0;
  bool matched_any = false;  // false when restrict_to is disjoint from the labels present
};

// Copies ds, then overwrites the trigger features and relabels to attack_target on
// round(poison_fraction * matching) samples whose label is in restrict_to.
PoisonResult inject_backdoor(const LabeledDataset& ds, const BackdoorSpec& spec,
                             const std::vector<int>& restrict_to, std::uint64_t seed);

// Applies the trigger features to every sample; labels are untouched.
LabeledDataset apply_trigger_only(const LabeledDataset& ds, const BackdoorSpec& spec);

LabeledDataset subset(const LabeledDataset& ds, const std::vector<int>& indices);

// Plain text table, one row per sample: feature columns then the label column.
void save_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

}  // namespace fedunlearn
