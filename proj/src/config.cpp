#include "fedunlearn/config.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "fedunlearn/errors.hpp"
#include "fedunlearn/rng.hpp"

namespace fedunlearn {

using nlohmann::json;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Train: return "train";
    case ExperimentKind::Unlearn: return "unlearn";
    case ExperimentKind::Retrain: return "retrain";
    case ExperimentKind::BackdoorEval: return "backdoor-eval";
    case ExperimentKind::Ablation: return "ablation";
    case ExperimentKind::AlphaSweep: return "alpha-sweep";
    case ExperimentKind::MultiClass: return "multi-class";
  }
  throw ConfigError("unknown experiment kind");
}

namespace {

ExperimentKind kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::Train, ExperimentKind::Unlearn, ExperimentKind::Retrain,
                 ExperimentKind::BackdoorEval, ExperimentKind::Ablation, ExperimentKind::AlphaSweep,
                 ExperimentKind::MultiClass})
    if (to_string(k) == s) return k;
  throw ConfigError("experiment: unknown kind '" + s + "'");
}

void reject_unknown(const json& obj, const std::string& prefix,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok) throw ConfigError("config: unknown key '" + prefix + key + "'");
  }
}

template <typename T>
void read(const json& obj, const std::string& prefix, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + prefix + key + "'");
  }
}

template <typename T>
void read_optional(const json& obj, const std::string& prefix, const char* key,
                   std::optional<T>& out) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
    return;
  }
  T v{};
  read(obj, prefix, key, v);
  out = v;
}

void parse_data(const json& obj, DataConfig& cfg) {
  reject_unknown(obj, "data.",
                 {"num_classes", "feature_dim", "train_per_class", "test_per_class", "spread",
                  "beta", "seed", "partition_seed"});
  read(obj, "data.", "num_classes", cfg.num_classes);
  read(obj, "data.", "feature_dim", cfg.feature_dim);
  read(obj, "data.", "train_per_class", cfg.train_per_class);
  read(obj, "data.", "test_per_class", cfg.test_per_class);
  read(obj, "data.", "spread", cfg.spread);
  read(obj, "data.", "beta", cfg.beta);
  read(obj, "data.", "seed", cfg.seed);
  read(obj, "data.", "partition_seed", cfg.partition_seed);
}

void parse_model(const json& obj, ModelConfig& cfg) {
  reject_unknown(obj, "model.", {"hidden_sizes", "init_seed"});
  read(obj, "model.", "hidden_sizes", cfg.hidden_sizes);
  read(obj, "model.", "init_seed", cfg.init_seed);
}

void parse_fl(const json& obj, FLConfig& cfg) {
  reject_unknown(obj, "fl.",
                 {"num_clients", "participation_fraction", "local_epochs", "batch_size", "lr",
                  "max_rounds", "stop_accuracy", "seed"});
  read(obj, "fl.", "num_clients", cfg.num_clients);
  read(obj, "fl.", "participation_fraction", cfg.participation_fraction);
  read(obj, "fl.", "local_epochs", cfg.local_epochs);
  read(obj, "fl.", "batch_size", cfg.batch_size);
  read(obj, "fl.", "lr", cfg.lr);
  read(obj, "fl.", "max_rounds", cfg.max_rounds);
  read(obj, "fl.", "stop_accuracy", cfg.stop_accuracy);
  read(obj, "fl.", "seed", cfg.seed);
}

void parse_unlearn(const json& obj, ExperimentConfig& cfg) {
  reject_unknown(obj, "unlearn.",
                 {"lr", "local_epochs", "max_rounds", "alpha_override", "forget_acc_threshold",
                  "retain_acc_drop_tolerance", "forget_teacher_seed", "double_forget_weight",
                  "target_classes", "resume_rounds"});
  read(obj, "unlearn.", "lr", cfg.unlearn.lr);
  read(obj, "unlearn.", "local_epochs", cfg.unlearn.local_epochs);
  read(obj, "unlearn.", "max_rounds", cfg.unlearn.max_rounds);
  read_optional(obj, "unlearn.", "alpha_override", cfg.unlearn.alpha_override);
  read(obj, "unlearn.", "forget_acc_threshold", cfg.unlearn.forget_acc_threshold);
  read(obj, "unlearn.", "retain_acc_drop_tolerance", cfg.unlearn.retain_acc_drop_tolerance);
  read(obj, "unlearn.", "forget_teacher_seed", cfg.unlearn.forget_teacher_seed);
  read(obj, "unlearn.", "double_forget_weight", cfg.unlearn.double_forget_weight);
  read(obj, "unlearn.", "target_classes", cfg.target_classes);
  read(obj, "unlearn.", "resume_rounds", cfg.resume_rounds);
}

void parse_backdoor(const json& obj, BackdoorConfig& cfg) {
  reject_unknown(obj, "backdoor.",
                 {"enabled", "trigger_mask", "trigger_value", "attack_target", "poison_fraction",
                  "seed", "asr_before_min", "asr_after_max"});
  read(obj, "backdoor.", "enabled", cfg.enabled);
  read(obj, "backdoor.", "trigger_mask", cfg.trigger_mask);
  read_optional(obj, "backdoor.", "trigger_value", cfg.trigger_value);
  read_optional(obj, "backdoor.", "attack_target", cfg.attack_target);
  read(obj, "backdoor.", "poison_fraction", cfg.poison_fraction);
  read(obj, "backdoor.", "seed", cfg.seed);
  read(obj, "backdoor.", "asr_before_min", cfg.asr_before_min);
  read(obj, "backdoor.", "asr_after_max", cfg.asr_after_max);
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  if (cfg.data.num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
  if (cfg.data.feature_dim < 1) throw ConfigError("data.feature_dim must be >= 1");
  if (cfg.data.train_per_class < 1) throw ConfigError("data.train_per_class must be >= 1");
  if (cfg.data.test_per_class < 1) throw ConfigError("data.test_per_class must be >= 1");
  if (cfg.data.spread <= 0.0) throw ConfigError("data.spread must be > 0");
  if (cfg.data.beta <= 0.0) throw ConfigError("data.beta must be > 0");
  for (int h : cfg.model.hidden_sizes)
    if (h < 1) throw ConfigError("model.hidden_sizes entries must be >= 1");
  validate(cfg.fl);
  validate(cfg.unlearn);
  ForgetSpec spec{cfg.target_classes};
  std::sort(spec.target_classes.begin(), spec.target_classes.end());
  validate(spec, cfg.data.num_classes);
  if (cfg.resume_rounds < 0) throw ConfigError("unlearn.resume_rounds must be >= 0");
  for (double a : cfg.sweep_alphas)
    if (a <= 0.0) throw ConfigError("sweep_alphas entries must be > 0");
  if (cfg.backdoor.poison_fraction < 0.0 || cfg.backdoor.poison_fraction > 1.0)
    throw ConfigError("backdoor.poison_fraction must be in [0,1]");
  for (int f : cfg.backdoor.trigger_mask)
    if (f < 0 || f >= cfg.data.feature_dim)
      throw ConfigError("backdoor.trigger_mask indices must be in [0, data.feature_dim)");
  if (cfg.backdoor.attack_target &&
      (*cfg.backdoor.attack_target < 0 || *cfg.backdoor.attack_target >= cfg.data.num_classes))
    throw ConfigError("backdoor.attack_target must be in [0, data.num_classes)");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown(root, "",
                 {"experiment", "output_dir", "data", "model", "fl", "unlearn", "backdoor",
                  "sweep_alphas"});

  ExperimentConfig cfg;
  if (root.contains("experiment")) cfg.experiment = kind_from_string(root.at("experiment"));
  read(root, "", "output_dir", cfg.output_dir);
  read(root, "", "sweep_alphas", cfg.sweep_alphas);
  if (root.contains("data")) parse_data(root.at("data"), cfg.data);
  if (root.contains("model")) parse_model(root.at("model"), cfg.model);
  if (root.contains("fl")) parse_fl(root.at("fl"), cfg.fl);
  if (root.contains("unlearn")) parse_unlearn(root.at("unlearn"), cfg);
  if (root.contains("backdoor")) parse_backdoor(root.at("backdoor"), cfg.backdoor);

  std::sort(cfg.target_classes.begin(), cfg.target_classes.end());
  validate(cfg);
  return cfg;
}

std::string to_json(const ExperimentConfig& cfg) {
  json root;
  root["experiment"] = to_string(cfg.experiment);
  root["output_dir"] = cfg.output_dir;
  root["sweep_alphas"] = cfg.sweep_alphas;
  root["data"] = {{"num_classes", cfg.data.num_classes},
                  {"feature_dim", cfg.data.feature_dim},
                  {"train_per_class", cfg.data.train_per_class},
                  {"test_per_class", cfg.data.test_per_class},
                  {"spread", cfg.data.spread},
                  {"beta", cfg.data.beta},
                  {"seed", cfg.data.seed},
                  {"partition_seed", cfg.data.partition_seed}};
  root["model"] = {{"hidden_sizes", cfg.model.hidden_sizes}, {"init_seed", cfg.model.init_seed}};
  root["fl"] = {{"num_clients", cfg.fl.num_clients},
                {"participation_fraction", cfg.fl.participation_fraction},
                {"local_epochs", cfg.fl.local_epochs},
                {"batch_size", cfg.fl.batch_size},
                {"lr", cfg.fl.lr},
                {"max_rounds", cfg.fl.max_rounds},
                {"stop_accuracy", cfg.fl.stop_accuracy},
                {"seed", cfg.fl.seed}};
  root["unlearn"] = {{"lr", cfg.unlearn.lr},
                     {"local_epochs", cfg.unlearn.local_epochs},
                     {"max_rounds", cfg.unlearn.max_rounds},
                     {"forget_acc_threshold", cfg.unlearn.forget_acc_threshold},
                     {"retain_acc_drop_tolerance", cfg.unlearn.retain_acc_drop_tolerance},
                     {"forget_teacher_seed", cfg.unlearn.forget_teacher_seed},
                     {"double_forget_weight", cfg.unlearn.double_forget_weight},
                     {"target_classes", cfg.target_classes},
                     {"resume_rounds", cfg.resume_rounds}};
  root["unlearn"]["alpha_override"] =
      cfg.unlearn.alpha_override ? json(*cfg.unlearn.alpha_override) : json(nullptr);
  root["backdoor"] = {{"enabled", cfg.backdoor.enabled},
                      {"trigger_mask", cfg.backdoor.trigger_mask},
                      {"poison_fraction", cfg.backdoor.poison_fraction},
                      {"seed", cfg.backdoor.seed},
                      {"asr_before_min", cfg.backdoor.asr_before_min},
                      {"asr_after_max", cfg.backdoor.asr_after_max}};
  root["backdoor"]["trigger_value"] =
      cfg.backdoor.trigger_value ? json(*cfg.backdoor.trigger_value) : json(nullptr);
  root["backdoor"]["attack_target"] =
      cfg.backdoor.attack_target ? json(*cfg.backdoor.attack_target) : json(nullptr);
  return root.dump(2) + "\n";
}

void override_seeds(ExperimentConfig& cfg, std::uint64_t base) {
  cfg.data.seed = derive_seed(base, 1);
  cfg.data.partition_seed = derive_seed(base, 2);
  cfg.model.init_seed = derive_seed(base, 3);
  cfg.fl.seed = derive_seed(base, 4);
  cfg.unlearn.forget_teacher_seed = derive_seed(base, 5);
  cfg.backdoor.seed = derive_seed(base, 6);
}

}  // namespace fedunlearn
