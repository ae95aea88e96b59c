#include "fedunlearn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fedunlearn/errors.hpp"
#include "fedunlearn/rng.hpp"

namespace fedunlearn {

bool ForgetSpec::contains(int label) const {
  return std::binary_search(target_classes.begin(), target_classes.end(), label);
}

void validate(const ForgetSpec& spec, int num_classes) {
  if (spec.target_classes.empty()) throw ConfigError("forget spec: no target classes");
  if (!std::is_sorted(spec.target_classes.begin(), spec.target_classes.end()))
    throw ConfigError("forget spec: target classes must be sorted");
  if (std::adjacent_find(spec.target_classes.begin(), spec.target_classes.end()) !=
      spec.target_classes.end())
    throw ConfigError("forget spec: duplicate target class");
  for (int c : spec.target_classes)
    if (c < 0 || c >= num_classes) throw ConfigError("forget spec: target class out of range");
  if (static_cast<int>(spec.target_classes.size()) >= num_classes)
    throw ConfigError("forget spec: must be a strict subset of the classes");
}

LabeledDataset gen_synthetic(int num_classes, int feature_dim, int n_per_class, double spread,
                             std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("gen_synthetic: need at least two classes");
  if (feature_dim < 1) throw ConfigError("gen_synthetic: feature_dim must be >= 1");
  if (n_per_class < 1) throw ConfigError("gen_synthetic: n_per_class must be >= 1");
  if (spread <= 0.0) throw ConfigError("gen_synthetic: spread must be > 0");

  LabeledDataset ds;
  ds.samples.reserve(static_cast<std::size_t>(num_classes) * n_per_class);
  ds.labels.reserve(ds.samples.capacity());
  auto rng = make_engine(seed);
  std::normal_distribution<double> noise(0.0, spread);
  for (int k = 0; k < num_classes; ++k) {
    std::vector<double> centroid(feature_dim, 0.0);
    centroid[k % feature_dim] = 1.0 + static_cast<double>(k / feature_dim);
    for (int i = 0; i < n_per_class; ++i) {
      std::vector<double> x(feature_dim);
      for (int j = 0; j < feature_dim; ++j) x[j] = centroid[j] + noise(rng);
      ds.samples.push_back(std::move(x));
      ds.labels.push_back(k);
    }
  }
  return ds;
}

ClientPartition dirichlet_partition(const LabeledDataset& ds, int num_clients, double beta,
                                    std::uint64_t seed) {
  if (num_clients < 2) throw ConfigError("dirichlet_partition: need at least two clients");
  if (beta <= 0.0) throw ConfigError("dirichlet_partition: beta must be > 0");
  if (ds.size() < static_cast<std::size_t>(num_clients))
    throw ConfigError("dirichlet_partition: fewer samples than clients");

  int num_classes = 0;
  for (int y : ds.labels) num_classes = std::max(num_classes, y + 1);
  std::vector<std::vector<int>> by_class(num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(static_cast<int>(i));

  auto rng = make_engine(seed);
  std::gamma_distribution<double> gamma(beta, 1.0);
  std::vector<std::vector<int>> shards(num_clients);

  for (auto& cls : by_class) {
    if (cls.empty()) continue;
    std::vector<double> g(num_clients);
    double total = 0.0;
    for (auto& v : g) {
      v = gamma(rng);
      total += v;
    }
    if (total <= 0.0) {
      std::fill(g.begin(), g.end(), 1.0);
      total = static_cast<double>(num_clients);
    }
    std::shuffle(cls.begin(), cls.end(), rng);

    // largest-remainder split of the class across clients
    const int m = static_cast<int>(cls.size());
    std::vector<int> count(num_clients);
    std::vector<std::pair<double, int>> frac(num_clients);
    int assigned = 0;
    for (int i = 0; i < num_clients; ++i) {
      const double want = g[i] / total * m;
      count[i] = static_cast<int>(std::floor(want));
      assigned += count[i];
      frac[i] = {want - count[i], i};
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int r = 0; r < m - assigned; ++r) ++count[frac[r].second];

    int pos = 0;
    for (int i = 0; i < num_clients; ++i)
      for (int c = 0; c < count[i]; ++c) shards[i].push_back(cls[pos++]);
  }

  for (auto& shard : shards) {
    if (!shard.empty()) continue;
    auto big = std::max_element(shards.begin(), shards.end(),
                                [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (big->size() <= 1) throw ConfigError("dirichlet_partition: cannot repair empty shard");
    shard.push_back(big->back());
    big->pop_back();
  }
  for (auto& shard : shards) std::sort(shard.begin(), shard.end());
  return {shards};
}

std::pair<LabeledDataset, LabeledDataset> split_forget_retain(const LabeledDataset& shard,
                                                              const ForgetSpec& spec) {
  LabeledDataset forgotten, retained;
  for (std::size_t i = 0; i < shard.size(); ++i) {
    auto& dst = spec.contains(shard.labels[i]) ? forgotten : retained;
    dst.samples.push_back(shard.samples[i]);
    dst.labels.push_back(shard.labels[i]);
  }
  return {std::move(forgotten), std::move(retained)};
}

namespace {

void check_trigger(const BackdoorSpec& spec, int feature_dim) {
  if (spec.trigger_mask.empty()) throw std::invalid_argument("backdoor: empty trigger mask");
  for (int f : spec.trigger_mask)
    if (f < 0 || f >= feature_dim)
      throw std::invalid_argument("backdoor: trigger index out of range");
}

}  // namespace

PoisonResult inject_backdoor(const LabeledDataset& ds, const BackdoorSpec& spec,
                             const std::vector<int>& restrict_to, std::uint64_t seed) {
  if (restrict_to.empty()) throw std::invalid_argument("inject_backdoor: restrict_to is empty");
  if (spec.poison_fraction < 0.0 || spec.poison_fraction > 1.0)
    throw std::invalid_argument("inject_backdoor: poison_fraction must be in [0,1]");
  if (!ds.empty()) check_trigger(spec, ds.feature_dim());
  if (spec.attack_target < 0) throw std::invalid_argument("inject_backdoor: bad attack target");

  std::vector<int> matching;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (std::find(restrict_to.begin(), restrict_to.end(), ds.labels[i]) != restrict_to.end())
      matching.push_back(static_cast<int>(i));

  PoisonResult res{ds, 0, !matching.empty()};
  if (matching.empty()) return res;

  const int count =
      static_cast<int>(std::llround(spec.poison_fraction * static_cast<double>(matching.size())));
  auto rng = make_engine(seed);
  std::shuffle(matching.begin(), matching.end(), rng);
  matching.resize(count);
  std::sort(matching.begin(), matching.end());

  for (int idx : matching) {
    for (int f : spec.trigger_mask) res.dataset.samples[idx][f] = spec.trigger_value;
    res.dataset.labels[idx] = spec.attack_target;
  }
  res.poisoned_count = count;
  return res;
}

LabeledDataset apply_trigger_only(const LabeledDataset& ds, const BackdoorSpec& spec) {
  if (!ds.empty()) check_trigger(spec, ds.feature_dim());
  LabeledDataset out = ds;
  for (auto& x : out.samples)
    for (int f : spec.trigger_mask) x[f] = spec.trigger_value;
  return out;
}

LabeledDataset subset(const LabeledDataset& ds, const std::vector<int>& indices) {
  LabeledDataset out;
  out.samples.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= ds.size())
      throw std::invalid_argument("subset: index out of range");
    out.samples.push_back(ds.samples[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

void save_dataset(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  const int d = ds.feature_dim();
  out << "# dataset rows=" << ds.size() << " features=" << d << "\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.samples[i][j]);
      out << buf << ',';
    }
    out << ds.labels[i] << '\n';
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

LabeledDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string header;
  std::getline(in, header);
  std::size_t rows = 0;
  int features = 0;
  if (std::sscanf(header.c_str(), "# dataset rows=%zu features=%d", &rows, &features) != 2)
    throw std::runtime_error("load_dataset: bad header in " + path);

  LabeledDataset ds;
  ds.samples.reserve(rows);
  ds.labels.reserve(rows);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> x(features);
    std::string cell;
    for (int j = 0; j < features; ++j) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("load_dataset: short row");
      x[j] = std::stod(cell);
    }
    if (!std::getline(ss, cell)) throw std::runtime_error("load_dataset: missing label");
    ds.samples.push_back(std::move(x));
    ds.labels.push_back(std::stoi(cell));
  }
  if (ds.size() != rows) throw std::runtime_error("load_dataset: row count mismatch");
  return ds;
}

}  // namespace fedunlearn
