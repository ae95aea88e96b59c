#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fedunlearn/errors.hpp"
#include "fedunlearn/experiment.hpp"

using namespace fedunlearn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(slurp(path)); }

// scaled-down but otherwise faithful experiment setup
ExperimentConfig small_config(ExperimentKind kind, const std::string& outdir) {
  ExperimentConfig cfg;
  cfg.experiment = kind;
  cfg.output_dir = outdir;
  cfg.data.num_classes = 10;
  cfg.data.feature_dim = 8;
  cfg.data.train_per_class = 40;
  cfg.data.test_per_class = 15;
  cfg.data.spread = 0.25;
  cfg.data.beta = 1.0;
  cfg.model.hidden_sizes = {16};
  cfg.fl.num_clients = 6;
  cfg.fl.participation_fraction = 1.0;
  cfg.fl.local_epochs = 2;
  cfg.fl.batch_size = 16;
  cfg.fl.lr = 0.1;
  cfg.fl.max_rounds = 120;
  cfg.fl.stop_accuracy = 0.95;
  cfg.unlearn.lr = 0.1;
  cfg.unlearn.max_rounds = 8;
  // 15-sample forget split: anything under 0.1 demands a perfect 0/15
  cfg.unlearn.forget_acc_threshold = 0.1;
  cfg.unlearn.retain_acc_drop_tolerance = 0.05;
  cfg.target_classes = {1};
  cfg.resume_rounds = 3;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("resolve_backdoor fills documented defaults") {
  auto cfg = small_config(ExperimentKind::Unlearn, "unused");
  cfg.data.feature_dim = 16;
  cfg.data.spread = 0.25;
  cfg.target_classes = {5, 7};
  const auto spec = resolve_backdoor(cfg);
  CHECK(spec.trigger_mask == std::vector<int>{13, 14, 15});
  CHECK(spec.trigger_value == doctest::Approx(1.5));
  CHECK(spec.attack_target == 5);
  CHECK(spec.poison_fraction == 0.5);

  cfg.backdoor.trigger_mask = {0, 1};
  cfg.backdoor.trigger_value = 2.5;
  cfg.backdoor.attack_target = 3;
  const auto custom = resolve_backdoor(cfg);
  CHECK(custom.trigger_mask == std::vector<int>{0, 1});
  CHECK(custom.trigger_value == 2.5);
  CHECK(custom.attack_target == 3);
}

TEST_CASE("prepare_workbench assembles consistent state") {
  const auto cfg = small_config(ExperimentKind::Unlearn, "unused");
  const auto wb = prepare_workbench(cfg);
  CHECK(wb.clean_train.size() == 400);
  CHECK(wb.test_set.size() == 150);
  CHECK(wb.forget_test.size() == 15);
  CHECK(wb.retain_test.size() == 135);
  for (int y : wb.forget_test.labels) CHECK(y == 1);
  for (int y : wb.retain_test.labels) CHECK(y != 1);
  CHECK(wb.train_set.samples == wb.clean_train.samples);
  CHECK(wb.poisoned_count == 0);

  CHECK(wb.initial_model.arch.layer_sizes == std::vector<int>{8, 16, 10});
  REQUIRE(wb.clients.size() == 6);
  std::size_t total = 0;
  for (std::size_t i = 0; i < wb.clients.size(); ++i) {
    CHECK(wb.clients[i].id == static_cast<int>(i));
    CHECK(wb.clients[i].train_shard.size() == wb.partition.client_shards[i].size());
    CHECK(wb.clients[i].local_model.values == wb.initial_model.values);
    total += wb.clients[i].train_shard.size();
  }
  CHECK(total == wb.train_set.size());

  const auto ctx = wb.eval();
  CHECK(ctx.retain_test == &wb.retain_test);
  CHECK(ctx.backdoor == nullptr);
  CHECK(wb.eval(true).backdoor == &wb.backdoor);
}

TEST_CASE("prepare_workbench injects the backdoor only into target-class data") {
  auto cfg = small_config(ExperimentKind::Unlearn, "unused");
  cfg.backdoor.enabled = true;
  const auto wb = prepare_workbench(cfg);
  CHECK(wb.poisoned_count == 20);  // half of the 40 target-class samples
  CHECK(wb.train_set.samples != wb.clean_train.samples);
  CHECK(wb.train_set.labels == wb.clean_train.labels);  // identity relabel to the same class
  int touched = 0;
  for (std::size_t i = 0; i < wb.train_set.size(); ++i)
    if (wb.train_set.samples[i] != wb.clean_train.samples[i]) {
      ++touched;
      CHECK(wb.clean_train.labels[i] == 1);
    }
  CHECK(touched == 20);
}

TEST_CASE("overall-accuracy stop weighs splits by size") {
  const auto cfg = small_config(ExperimentKind::Unlearn, "unused");
  const auto wb = prepare_workbench(cfg);
  MetricsRecord rec;
  rec.acc_retained = 1.0;
  rec.acc_forgotten = 0.0;
  CHECK(stop_on_overall_accuracy(wb, 0.89)(0, rec));      // 135/150
  CHECK_FALSE(stop_on_overall_accuracy(wb, 0.91)(0, rec));
  CHECK(stop_on_retained_accuracy(0.99)(0, rec));
  rec.acc_retained = 0.98;
  CHECK_FALSE(stop_on_retained_accuracy(0.99)(0, rec));
}

TEST_CASE("train_phase converges and retrain_phase never sees the forgotten class") {
  auto cfg = small_config(ExperimentKind::Unlearn, "unused");
  auto wb = prepare_workbench(cfg);
  const auto train = train_phase(wb, cfg);
  REQUIRE(!train.records.empty());
  CHECK(train.records.back().acc_retained >= 0.85);
  CHECK(train.records.back().acc_forgotten >= 0.8);

  const auto retrain = retrain_phase(wb, cfg);
  REQUIRE(!retrain.records.empty());
  for (const auto& rec : retrain.records) CHECK(rec.phase == Phase::Retrain);
  CHECK(retrain.records.back().acc_retained >= 0.95);
  CHECK(retrain.records.back().acc_forgotten <= 0.5);  // class 1 never trained
}

TEST_CASE("train experiment writes the full artifact set") {
  TempDir dir("exp_out_train");
  const auto cfg = small_config(ExperimentKind::Train, dir.path.string());
  CHECK(run_experiment(cfg) == 0);
  for (const char* name :
       {"resolved_config.json", "metrics.csv", "timing.csv", "plot_data.csv", "summary.json"})
    CHECK(fs::exists(dir.path / name));

  const auto summary = read_json(dir.path / "summary.json");
  CHECK(summary.at("thresholds_met") == true);
  CHECK(summary.at("train").at("reached_stop") == true);
  CHECK(summary.at("train").at("final_acc_retained").get<double>() >= 0.9);

  const auto snapshot = read_json(dir.path / "resolved_config.json");
  CHECK(snapshot.at("experiment") == "train");
  CHECK(snapshot.at("data").at("num_classes") == 10);
}

TEST_CASE("a zero-round train run reports unmet thresholds") {
  TempDir dir("exp_out_stub");
  auto cfg = small_config(ExperimentKind::Train, dir.path.string());
  cfg.fl.max_rounds = 0;
  CHECK(run_experiment(cfg) == 1);
  CHECK(read_json(dir.path / "summary.json").at("thresholds_met") == false);
}

TEST_CASE("unlearn experiment stitches phases with continuous numbering") {
  TempDir dir("exp_out_unlearn");
  const auto cfg = small_config(ExperimentKind::Unlearn, dir.path.string());
  const int rc = run_experiment(cfg);
  CHECK(rc == 0);
  CHECK(fs::exists(dir.path / "unlearn_directive.json"));

  const auto directive = read_json(dir.path / "unlearn_directive.json");
  CHECK(directive.at("target_classes") == nlohmann::json::array({1}));
  CHECK(directive.at("alpha").get<double>() == doctest::Approx(9.0));  // 360 retained / 40 forgotten
  CHECK(directive.at("max_rounds") == 8);

  const auto summary = read_json(dir.path / "summary.json");
  CHECK(summary.at("unlearn").at("criterion_met") == true);
  CHECK(summary.at("unlearn").at("rounds_used").get<int>() >= 1);
  CHECK(summary.at("unlearn").at("rounds_used").get<int>() <= 8);
  CHECK(summary.at("resume").at("rounds").get<int>() == 3);
  CHECK(summary.at("unlearn").at("final_acc_forgotten").get<double>() <= 0.1);

  // phase order and strictly increasing round numbers down the csv
  std::istringstream csv(slurp(dir.path / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  int prev_round = 0;
  int prev_comm = 0;
  bool seen_unlearn = false, seen_resume = false;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string round_s, phase;
    std::getline(row, round_s, ',');
    std::getline(row, phase, ',');
    const int round = std::stoi(round_s);
    CHECK(round == prev_round + 1);
    prev_round = round;
    std::string skip;
    std::getline(row, skip, ',');
    std::getline(row, skip, ',');
    std::getline(row, skip, ',');
    std::string comm_s;
    std::getline(row, comm_s, ',');
    const int comm = std::stoi(comm_s);
    CHECK(comm == prev_comm + 1);
    prev_comm = comm;
    if (phase == "unlearn") {
      CHECK_FALSE(seen_resume);
      seen_unlearn = true;
    }
    if (phase == "resume") {
      CHECK(seen_unlearn);
      seen_resume = true;
    }
  }
  CHECK(seen_unlearn);
  CHECK(seen_resume);
}

TEST_CASE("identical configs produce byte-identical deterministic artifacts") {
  TempDir dir_a("exp_out_det_a");
  TempDir dir_b("exp_out_det_b");
  auto cfg_a = small_config(ExperimentKind::Unlearn, dir_a.path.string());
  auto cfg_b = small_config(ExperimentKind::Unlearn, dir_b.path.string());
  REQUIRE(run_experiment(cfg_a) == run_experiment(cfg_b));
  CHECK(slurp(dir_a.path / "metrics.csv") == slurp(dir_b.path / "metrics.csv"));
  CHECK(slurp(dir_a.path / "summary.json") == slurp(dir_b.path / "summary.json"));
  CHECK(slurp(dir_a.path / "plot_data.csv") == slurp(dir_b.path / "plot_data.csv"));

  auto cfg_c = small_config(ExperimentKind::Unlearn, dir_b.path.string());
  cfg_c.fl.seed = 999;
  fs::remove_all(dir_b.path);
  run_experiment(cfg_c);
  CHECK(slurp(dir_a.path / "metrics.csv") != slurp(dir_b.path / "metrics.csv"));
}

TEST_CASE("retrain experiment trains a from-scratch baseline") {
  TempDir dir("exp_out_retrain");
  const auto cfg = small_config(ExperimentKind::Retrain, dir.path.string());
  CHECK(run_experiment(cfg) == 0);
  const auto summary = read_json(dir.path / "summary.json");
  CHECK(summary.at("retrain").at("reached_stop") == true);
  CHECK(summary.at("retrain").at("final_acc_forgotten").get<double>() <= 0.5);
}

TEST_CASE("backdoor-eval experiment reports both attack rates") {
  TempDir dir("exp_out_bd");
  const auto cfg = small_config(ExperimentKind::BackdoorEval, dir.path.string());
  const int rc = run_experiment(cfg);
  CHECK((rc == 0 || rc == 1));
  const auto summary = read_json(dir.path / "summary.json");
  const double before = summary.at("backdoor").at("asr_before").get<double>();
  const double after = summary.at("backdoor").at("asr_after").get<double>();
  CHECK(before >= 0.0);
  CHECK(before <= 1.0);
  CHECK(after >= 0.0);
  CHECK(after <= 1.0);
  CHECK(summary.at("backdoor").at("poisoned_count").get<int>() == 20);
}

TEST_CASE("ablation experiment writes one curve per combo") {
  TempDir dir("exp_out_ablation");
  auto cfg = small_config(ExperimentKind::Ablation, dir.path.string());
  cfg.unlearn.max_rounds = 3;
  const int rc = run_experiment(cfg);
  CHECK((rc == 0 || rc == 1));
  for (const char* name :
       {"metrics_P_F.csv", "metrics_F_L.csv", "metrics_P_F_L.csv", "plot_data.csv"})
    CHECK(fs::exists(dir.path / name));
  CHECK(count_lines(slurp(dir.path / "metrics_P_F_L.csv")) == 4);  // header + one row per round

  const auto summary = read_json(dir.path / "summary.json");
  REQUIRE(summary.at("runs").size() == 3);
  CHECK(summary.at("runs").at(2).at("label") == "P+F+L");
}

TEST_CASE("alpha sweep defaults to one, the data ratio and ten times the ratio") {
  TempDir dir("exp_out_alpha");
  const auto cfg = small_config(ExperimentKind::AlphaSweep, dir.path.string());
  CHECK(run_experiment(cfg) == 0);
  const auto summary = read_json(dir.path / "summary.json");
  REQUIRE(summary.at("runs").size() == 3);
  CHECK(summary.at("runs").at(0).at("alpha").get<double>() == doctest::Approx(1.0));
  CHECK(summary.at("runs").at(1).at("alpha").get<double>() == doctest::Approx(9.0));
  CHECK(summary.at("runs").at(2).at("alpha").get<double>() == doctest::Approx(90.0));
  for (const char* name : {"metrics_alpha_1.csv", "metrics_alpha_9.csv", "metrics_alpha_90.csv"})
    CHECK(fs::exists(dir.path / name));
  // sweep runs are single-round
  CHECK(count_lines(slurp(dir.path / "metrics_alpha_1.csv")) == 2);
}

TEST_CASE("multi-class experiment forgets classes sequentially") {
  TempDir dir("exp_out_multi");
  auto cfg = small_config(ExperimentKind::MultiClass, dir.path.string());
  cfg.target_classes = {0, 2};
  cfg.unlearn.retain_acc_drop_tolerance = 0.1;
  const int rc = run_experiment(cfg);
  CHECK((rc == 0 || rc == 1));
  CHECK(fs::exists(dir.path / "metrics_class_0.csv"));
  CHECK(fs::exists(dir.path / "metrics_class_2.csv"));
  const auto summary = read_json(dir.path / "summary.json");
  REQUIRE(summary.at("runs").size() == 2);
  CHECK(summary.at("runs").at(0).at("target_class") == 0);
  CHECK(summary.at("runs").at(1).at("target_class") == 2);
}

TEST_CASE("pipeline failures leave an error marker and exit code 2") {
  TempDir dir("exp_out_error");
  fs::create_directories(dir.path / "plot_data.csv");  // blocks the artifact write
  const auto cfg = small_config(ExperimentKind::Train, dir.path.string());
  CHECK(run_experiment(cfg) == 2);
  CHECK(fs::exists(dir.path / "ERROR.txt"));
  CHECK(!slurp(dir.path / "ERROR.txt").empty());
}
