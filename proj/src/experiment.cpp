#include "fedunlearn/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fedunlearn/errors.hpp"
#include "fedunlearn/rng.hpp"

namespace fedunlearn {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTagTestData = 0x7e57;

std::string sanitize(const std::string& label) {
  std::string out = label;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return out;
}

json phase_summary(const std::vector<MetricsRecord>& records) {
  json j;
  j["rounds"] = records.size();
  if (!records.empty()) {
    j["final_acc_retained"] = records.back().acc_retained;
    j["final_acc_forgotten"] = records.back().acc_forgotten;
    if (records.back().bd_asr) j["final_bd_asr"] = *records.back().bd_asr;
  }
  return j;
}

}  // namespace

EvalContext Workbench::eval(bool with_backdoor) const {
  EvalContext ctx;
  ctx.retain_test = &retain_test;
  ctx.forget_test = &forget_test;
  ctx.full_test = &test_set;
  ctx.backdoor = with_backdoor ? &backdoor : nullptr;
  return ctx;
}

BackdoorSpec resolve_backdoor(const ExperimentConfig& cfg) {
  BackdoorSpec spec;
  spec.trigger_mask = cfg.backdoor.trigger_mask;
  if (spec.trigger_mask.empty())
    for (int f = std::max(0, cfg.data.feature_dim - 3); f < cfg.data.feature_dim; ++f)
      spec.trigger_mask.push_back(f);
  spec.trigger_value = cfg.backdoor.trigger_value.value_or(6.0 * cfg.data.spread);
  spec.attack_target = cfg.backdoor.attack_target.value_or(cfg.target_classes.front());
  spec.poison_fraction = cfg.backdoor.poison_fraction;
  return spec;
}

Workbench prepare_workbench(const ExperimentConfig& cfg) {
  validate(cfg);
  Workbench wb;
  wb.clean_train = gen_synthetic(cfg.data.num_classes, cfg.data.feature_dim,
                                 cfg.data.train_per_class, cfg.data.spread, cfg.data.seed);
  wb.test_set = gen_synthetic(cfg.data.num_classes, cfg.data.feature_dim, cfg.data.test_per_class,
                              cfg.data.spread, derive_seed(cfg.data.seed, kTagTestData));
  wb.forget_spec.target_classes = cfg.target_classes;
  std::sort(wb.forget_spec.target_classes.begin(), wb.forget_spec.target_classes.end());
  wb.backdoor = resolve_backdoor(cfg);

  wb.train_set = wb.clean_train;
  if (cfg.backdoor.enabled) {
    auto poisoned = inject_backdoor(wb.clean_train, wb.backdoor, wb.forget_spec.target_classes,
                                    cfg.backdoor.seed);
    wb.train_set = std::move(poisoned.dataset);
    wb.poisoned_count = poisoned.poisoned_count;
  }

  wb.partition =
      dirichlet_partition(wb.train_set, cfg.fl.num_clients, cfg.data.beta, cfg.data.partition_seed);

  Architecture arch;
  arch.layer_sizes.push_back(cfg.data.feature_dim);
  for (int h : cfg.model.hidden_sizes) arch.layer_sizes.push_back(h);
  arch.layer_sizes.push_back(cfg.data.num_classes);
  wb.initial_model = init_params(arch, cfg.model.init_seed);

  wb.clients.reserve(cfg.fl.num_clients);
  for (int i = 0; i < cfg.fl.num_clients; ++i)
    wb.clients.push_back({i, subset(wb.train_set, wb.partition.client_shards[i]), wb.initial_model});

  auto splits = split_forget_retain(wb.test_set, wb.forget_spec);
  wb.forget_test = std::move(splits.first);
  wb.retain_test = std::move(splits.second);
  return wb;
}

StopPredicate stop_on_overall_accuracy(const Workbench& wb, double threshold) {
  const double nr = static_cast<double>(wb.retain_test.size());
  const double nf = static_cast<double>(wb.forget_test.size());
  return [nr, nf, threshold](int, const MetricsRecord& rec) {
    const double overall = (nr * rec.acc_retained + nf * rec.acc_forgotten) / (nr + nf);
    return overall >= threshold;
  };
}

StopPredicate stop_on_retained_accuracy(double threshold) {
  return [threshold](int, const MetricsRecord& rec) { return rec.acc_retained >= threshold; };
}

FLRunResult train_phase(Workbench& wb, const ExperimentConfig& cfg, bool with_backdoor) {
  return run_fl(wb.initial_model, wb.clients, cfg.fl,
                stop_on_overall_accuracy(wb, cfg.fl.stop_accuracy), wb.eval(with_backdoor),
                Phase::Train);
}

FLRunResult retrain_phase(const Workbench& wb, const ExperimentConfig& cfg) {
  std::vector<ClientState> clients = wb.clients;
  for (auto& cl : clients) cl.local_model = wb.initial_model;
  delete_forgotten(clients, wb.forget_spec);
  const ParamVector fresh = init_params(wb.initial_model.arch, cfg.model.init_seed);
  return run_fl(fresh, clients, cfg.fl, stop_on_retained_accuracy(cfg.fl.stop_accuracy),
                wb.eval(cfg.backdoor.enabled), Phase::Retrain);
}

namespace {

struct ArtifactWriter {
  fs::path dir;

  void write_text(const std::string& name, const std::string& text) const {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  }

  void metrics(const std::vector<MetricsRecord>& records) const {
    write_metrics_csv((dir / "metrics.csv").string(), records);
    write_timing_csv((dir / "timing.csv").string(), records);
  }

  void sweep_metrics(const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& runs)
      const {
    for (const auto& [label, records] : runs)
      write_metrics_csv((dir / ("metrics_" + sanitize(label) + ".csv")).string(), records);
    write_plot_data((dir / "plot_data.csv").string(), runs);
  }

  void directive(const ForgetSpec& spec, double alpha, const UnlearnConfig& cfg) const {
    json j;
    j["target_classes"] = spec.target_classes;
    j["alpha"] = alpha;
    j["forget_teacher_seed"] = cfg.forget_teacher_seed;
    j["max_rounds"] = cfg.max_rounds;
    write_text("unlearn_directive.json", j.dump(2) + "\n");
  }
};

int finish(const ArtifactWriter& art, json summary, bool thresholds_met) {
  summary["thresholds_met"] = thresholds_met;
  art.write_text("summary.json", summary.dump(2) + "\n");
  return thresholds_met ? 0 : 1;
}

int run_train(const ExperimentConfig& cfg, const ArtifactWriter& art) {
  Workbench wb = prepare_workbench(cfg);
  auto res = train_phase(wb, cfg);
  art.metrics(res.records);
  write_plot_data((art.dir / "plot_data.csv").string(), {{"train", res.records}});

  const bool reached = !res.records.empty() &&
                       stop_on_overall_accuracy(wb, cfg.fl.stop_accuracy)(0, res.records.back());
  json summary;
  summary["experiment"] = to_string(cfg.experiment);
  summary["train"] = phase_summary(res.records);
  summary["train"]["reached_stop"] = reached;
  return finish(art, summary, reached);
}

int run_retrain(const ExperimentConfig& cfg, const ArtifactWriter& art) {
  Workbench wb = prepare_workbench(cfg);
  auto res = retrain_phase(wb, cfg);
  art.metrics(res.records);
  write_plot_data((art.dir / "plot_data.csv").string(), {{"retrain", res.records}});

  const bool reached =
      !res.records.empty() && res.records.back().acc_retained >= cfg.fl.stop_accuracy;
  json summary;
  summary["experiment"] = to_string(cfg.experiment);
  summary["retrain"] = phase_summary(res.records);
  summary["retrain"]["reached_stop"] = reached;
  return finish(art, summary, reached);
}

int run_unlearn(const ExperimentConfig& cfg, const ArtifactWriter& art) {
  Workbench wb = prepare_workbench(cfg);
  auto train = train_phase(wb, cfg);

  const double pre_retained = accuracy(train.state.global_model, wb.retain_test);
  auto outcome = run_unlearning(train.state.global_model, wb.clients, wb.forget_spec, cfg.unlearn,
                                cfg.fl, wb.eval(), train.state.round, train.state.comm_rounds);
  art.directive(wb.forget_spec, outcome.alpha, cfg.unlearn);

  FLConfig resume_cfg = cfg.fl;
  resume_cfg.max_rounds = cfg.resume_rounds;
  auto resume = run_fl(outcome.unlearned_global, wb.clients, resume_cfg, nullptr, wb.eval(),
                       Phase::Resume, train.state.round + outcome.rounds_used,
                       train.state.comm_rounds + outcome.rounds_used);

  std::vector<MetricsRecord> all = train.records;
  all.insert(all.end(), outcome.per_round.begin(), outcome.per_round.end());
  all.insert(all.end(), resume.records.begin(), resume.records.end());
  art.metrics(all);
  write_plot_data((art.dir / "plot_data.csv").string(), {{"main", all}});

  json summary;
  summary["experiment"] = to_string(cfg.experiment);
  summary["train"] = phase_summary(train.records);
  summary["unlearn"] = phase_summary(outcome.per_round);
  summary["unlearn"]["rounds_used"] = outcome.rounds_used;
  summary["unlearn"]["criterion_met"] = outcome.criterion_met;
  summary["unlearn"]["alpha"] = outcome.alpha;
  summary["unlearn"]["excluded_clients"] = outcome.excluded_clients;
  summary["unlearn"]["pre_acc_retained"] = pre_retained;
  summary["resume"] = phase_summary(resume.records);
  return finish(art, summary, outcome.criterion_met);
}

int run_backdoor_eval(const ExperimentConfig& cfg, const ArtifactWriter& art) {
  ExperimentConfig bd_cfg = cfg;
  bd_cfg.backdoor.enabled = true;
  Workbench wb = prepare_workbench(bd_cfg);
  auto train = train_phase(wb, bd_cfg, true);

  const double asr_before = bd_asr(train.state.global_model, wb.test_set, wb.backdoor);
  auto outcome =
      run_unlearning(train.state.global_model, wb.clients, wb.forget_spec, bd_cfg.unlearn,
                     bd_cfg.fl, wb.eval(true), train.state.round, train.state.comm_rounds);
  const double asr_after = bd_asr(outcome.unlearned_global, wb.test_set, wb.backdoor);
  art.directive(wb.forget_spec, outcome.alpha, bd_cfg.unlearn);

  std::vector<MetricsRecord> all = train.records;
  all.insert(all.end(), outcome.per_round.begin(), outcome.per_round.end());
  art.metrics(all);
  write_plot_data((art.dir / "plot_data.csv").string(), {{"main", all}});

  json summary;
  summary["experiment"] = to_string(cfg.experiment);
  summary["train"] = phase_summary(train.records);
  summary["unlearn"] = phase_summary(outcome.per_round);
  summary["unlearn"]["rounds_used"] = outcome.rounds_used;
  summary["unlearn"]["criterion_met"] = outcome.criterion_met;
  summary["unlearn"]["alpha"] = outcome.alpha;
  summary["backdoor"] = {{"poisoned_count", wb.poisoned_count},
                         {"asr_before", asr_before},
                         {"asr_after", asr_after}};
  const bool met = outcome.criterion_met && asr_before >= bd_cfg.backdoor.asr_before_min &&
                   asr_after <= bd_cfg.backdoor.asr_after_max;
  return finish(art, summary, met);
}

int run_ablation(const ExperimentConfig& cfg, const ArtifactWriter& art) {
  Workbench wb = prepare_workbench(cfg);
  auto train = train_phase(wb, cfg);

  const std::vector<TeacherCombo> combos = {
      {true, true, false}, {false, true, true}, {true, true, true}};
  auto runs = ablation_suite(train.state.global_model, wb.clients, wb.forget_spec, cfg.unlearn,
                             cfg.fl, wb.eval(), combos);
  art.directive(wb.forget_spec, runs.back().outcome.alpha, cfg.unlearn);

  std::vector<std::pair<std::string, std::vector<MetricsRecord>>> labeled{{"train", train.records}};
  json run_summaries = json::array();
  bool all_forget = true;
  for (const auto& run : runs) {
    labeled.push_back({run.label, run.outcome.per_round});
    int rounds_to_forget = -1;
    for (const auto& rec : run.outcome.per_round)
      if (rec.acc_forgotten <= cfg.unlearn.forget_acc_threshold) {
        rounds_to_forget = rec.round;
        break;
      }
    if (rounds_to_forget < 0) all_forget = false;
    json j = phase_summary(run.outcome.per_round);
    j["label"] = run.label;
    j["rounds_to_forget"] = rounds_to_forget;
    run_summaries.push_back(std::move(j));
  }
  art.metrics(train.records);
  art.sweep_metrics(labeled);

  json summary;
  summary["experiment"] = to_string(cfg.experiment);
  summary["train"] = phase_summary(train.records);
  summary["runs"] = std::move(run_summaries);
  return finish(art, summary, all_forget);
}

int run_alpha_sweep(const ExperimentConfig& cfg, const ArtifactWriter& art) {
  Workbench wb = prepare_workbench(cfg);
  auto train = train_phase(wb, cfg);

  std::vector<double> alphas = cfg.sweep_alphas;
  if (alphas.empty()) {
    long retained = 0, forgotten = 0;
    for (std::size_t i = 0; i < wb.train_set.size(); ++i)
      (wb.forget_spec.contains(wb.train_set.labels[i]) ? forgotten : retained) += 1;
    const double base = resolve_alpha(retained, forgotten, std::nullopt);
    alphas = {1.0, base, 10.0 * base};
  }

  UnlearnConfig sweep_cfg = cfg.unlearn;
  sweep_cfg.max_rounds = 1;  // one round keeps the per-alpha comparison fair
  auto runs = alpha_sweep(train.state.global_model, wb.clients, wb.forget_spec, sweep_cfg, cfg.fl,
                          wb.eval(), alphas);
  art.directive(wb.forget_spec, runs.front().outcome.alpha, sweep_cfg);

  std::vector<std::pair<std::string, std::vector<MetricsRecord>>> labeled{{"train", train.records}};
  json run_summaries = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    labeled.push_back({runs[i].label, runs[i].outcome.per_round});
    json j = phase_summary(runs[i].outcome.per_round);
    j["label"] = runs[i].label;
    j["alpha"] = runs[i].outcome.alpha;
    run_summaries.push_back(std::move(j));
  }
  art.metrics(train.records);
  art.sweep_metrics(labeled);

  json summary;
  summary["experiment"] = to_string(cfg.experiment);
  summary["train"] = phase_summary(train.records);
  summary["runs"] = std::move(run_summaries);
  return finish(art, summary, true);
}

int run_multi_class(const ExperimentConfig& cfg, const ArtifactWriter& art) {
  Workbench wb = prepare_workbench(cfg);
  auto train = train_phase(wb, cfg);

  std::vector<ForgetSpec> specs;
  for (int c : wb.forget_spec.target_classes) specs.push_back(ForgetSpec{{c}});
  auto outcomes =
      run_multi_class_unlearning(train.state.global_model, wb.clients, specs, cfg.unlearn, cfg.fl,
                                 wb.test_set, train.state.round, train.state.comm_rounds);
  art.directive(wb.forget_spec, outcomes.front().alpha, cfg.unlearn);

  std::vector<MetricsRecord> all = train.records;
  std::vector<std::pair<std::string, std::vector<MetricsRecord>>> labeled{{"train", train.records}};
  json run_summaries = json::array();
  bool all_met = true;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    all.insert(all.end(), outcomes[i].per_round.begin(), outcomes[i].per_round.end());
    labeled.push_back({"class_" + std::to_string(specs[i].target_classes.front()),
                       outcomes[i].per_round});
    json j = phase_summary(outcomes[i].per_round);
    j["target_class"] = specs[i].target_classes.front();
    j["rounds_used"] = outcomes[i].rounds_used;
    j["criterion_met"] = outcomes[i].criterion_met;
    j["alpha"] = outcomes[i].alpha;
    run_summaries.push_back(std::move(j));
    all_met = all_met && outcomes[i].criterion_met;
  }
  art.metrics(all);
  art.sweep_metrics(labeled);

  json summary;
  summary["experiment"] = to_string(cfg.experiment);
  summary["train"] = phase_summary(train.records);
  summary["runs"] = std::move(run_summaries);
  return finish(art, summary, all_met);
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  ArtifactWriter art{fs::path(cfg.output_dir)};
  fs::create_directories(art.dir);
  art.write_text("resolved_config.json", to_json(cfg));
  try {
    switch (cfg.experiment) {
      case ExperimentKind::Train: return run_train(cfg, art);
      case ExperimentKind::Unlearn: return run_unlearn(cfg, art);
      case ExperimentKind::Retrain: return run_retrain(cfg, art);
      case ExperimentKind::BackdoorEval: return run_backdoor_eval(cfg, art);
      case ExperimentKind::Ablation: return run_ablation(cfg, art);
      case ExperimentKind::AlphaSweep: return run_alpha_sweep(cfg, art);
      case ExperimentKind::MultiClass: return run_multi_class(cfg, art);
    }
    throw ConfigError("unknown experiment kind");
  } catch (const std::exception& e) {
    art.write_text("ERROR.txt", std::string(e.what()) + "\n");
    return 2;
  }
}

}  // namespace fedunlearn
