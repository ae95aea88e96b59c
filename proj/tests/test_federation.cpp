#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "fedunlearn/errors.hpp"
#include "fedunlearn/federation.hpp"
#include "fedunlearn/rng.hpp"

using namespace fedunlearn;

namespace {

std::vector<ClientState> make_clients(const LabeledDataset& ds, const ClientPartition& part) {
  std::vector<ClientState> clients;
  for (std::size_t c = 0; c < part.client_shards.size(); ++c)
    clients.push_back({static_cast<int>(c), subset(ds, part.client_shards[c]), {}});
  return clients;
}

double mean_cross_entropy(const ParamVector& model, const LabeledDataset& ds) {
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto probs = softmax_t(forward_logits(model, ds.samples[i]), kTemperature);
    total += kl_div(one_hot(ds.labels[i], model.arch.num_classes()), probs);
  }
  return total / ds.size();
}

// element-major weighted mean, the reverse accumulation order of fedavg
ParamVector reference_average(const std::vector<ClientUpdate>& updates) {
  ParamVector out{updates.front().params.arch,
                  std::vector<double>(updates.front().params.values.size(), 0.0)};
  double total = 0.0;
  for (const auto& u : updates) total += static_cast<double>(u.sample_count);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    double acc = 0.0;
    for (auto it = updates.rbegin(); it != updates.rend(); ++it)
      acc += static_cast<double>(it->sample_count) * it->params.values[i];
    out.values[i] = acc / total;
  }
  return out;
}

}  // namespace

TEST_CASE("fl config validation catches each bad field") {
  FLConfig cfg;
  validate(cfg);
  auto broken = cfg;
  broken.num_clients = 1;
  CHECK_THROWS_AS(validate(broken), ConfigError);
  broken = cfg;
  broken.participation_fraction = 0.0;
  CHECK_THROWS_AS(validate(broken), ConfigError);
  broken = cfg;
  broken.participation_fraction = 1.5;
  CHECK_THROWS_AS(validate(broken), ConfigError);
  broken = cfg;
  broken.batch_size = 0;
  CHECK_THROWS_AS(validate(broken), ConfigError);
  broken = cfg;
  broken.lr = -0.1;
  CHECK_THROWS_AS(validate(broken), ConfigError);
  broken = cfg;
  broken.stop_accuracy = 1.1;
  CHECK_THROWS_AS(validate(broken), ConfigError);
}

TEST_CASE("sample_clients picks a sorted distinct subset deterministically") {
  FLConfig cfg;  // 20 clients at 25%
  const auto ids = sample_clients(cfg, 3);
  CHECK(ids.size() == 5);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  for (int id : ids) {
    CHECK(id >= 0);
    CHECK(id < cfg.num_clients);
  }
  CHECK(sample_clients(cfg, 3) == ids);

  bool any_different = false;
  for (int r = 0; r < 10; ++r)
    if (sample_clients(cfg, r) != ids) any_different = true;
  CHECK(any_different);

  auto other_seed = cfg;
  other_seed.seed = 123;
  bool seed_changes = false;
  for (int r = 0; r < 10; ++r)
    if (sample_clients(other_seed, r) != sample_clients(cfg, r)) seed_changes = true;
  CHECK(seed_changes);
}

TEST_CASE("sample_clients participation extremes") {
  FLConfig cfg;
  cfg.participation_fraction = 0.001;
  CHECK(sample_clients(cfg, 0).size() == 1);
  cfg.participation_fraction = 1.0;
  const auto all = sample_clients(cfg, 5);
  REQUIRE(all.size() == 20);
  for (int i = 0; i < 20; ++i) CHECK(all[i] == i);
}

TEST_CASE("fedavg matches the hand-computed weighted mean") {
  const Architecture arch{{2, 2}};
  ClientUpdate a{0, {arch, {1, 2, 3, 4, 5, 6}}, 2};
  ClientUpdate b{1, {arch, {7, 8, 9, 10, 11, 12}}, 6};
  const auto avg = fedavg({a, b});
  // weights 0.25 and 0.75
  const std::vector<double> expect{5.5, 6.5, 7.5, 8.5, 9.5, 10.5};
  REQUIRE(avg.values.size() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(avg.values[i] == doctest::Approx(expect[i]).epsilon(1e-14));

  const auto solo = fedavg({a});
  CHECK(solo.values == a.params.values);
}

TEST_CASE("fedavg agrees with an independently ordered fold") {
  const Architecture arch{{5, 7, 3}};
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  std::uniform_int_distribution<long> cnt(1, 50);
  std::vector<ClientUpdate> updates;
  for (int u = 0; u < 10; ++u) {
    ParamVector p{arch, std::vector<double>(arch.param_count())};
    for (auto& v : p.values) v = val(rng);
    updates.push_back({u, std::move(p), cnt(rng)});
  }
  const auto fast = fedavg(updates);
  const auto ref = reference_average(updates);
  for (std::size_t i = 0; i < fast.values.size(); ++i)
    CHECK(std::abs(fast.values[i] - ref.values[i]) <= 1e-12);
}

TEST_CASE("fedavg rejects malformed update sets") {
  const Architecture arch{{2, 2}};
  ClientUpdate good{0, {arch, std::vector<double>(6, 1.0)}, 5};
  CHECK_THROWS_AS(fedavg({}), ProtocolError);

  ClientUpdate mismatched{1, {Architecture{{3, 2}}, std::vector<double>(8, 1.0)}, 5};
  CHECK_THROWS_AS(fedavg({good, mismatched}), ProtocolError);

  ClientUpdate zero_count = good;
  zero_count.sample_count = 0;
  CHECK_THROWS_AS(fedavg({good, zero_count}), ProtocolError);

  ClientUpdate poisoned = good;
  poisoned.params.values[3] = std::nan("");
  CHECK_THROWS_AS(fedavg({good, poisoned}), ProtocolError);
}

TEST_CASE("local_train lowers the training loss and is seed-deterministic") {
  const auto ds = gen_synthetic(3, 6, 30, 0.2, 51);
  ClientState client{0, ds, {}};
  FLConfig cfg;
  cfg.local_epochs = 3;
  cfg.batch_size = 16;
  cfg.lr = 0.1;
  const auto start = init_params(Architecture{{6, 16, 3}}, 7);

  const auto trained = local_train(client, start, cfg, 1234);
  CHECK(mean_cross_entropy(trained, ds) < mean_cross_entropy(start, ds));

  const auto rerun = local_train(client, start, cfg, 1234);
  CHECK(rerun.values == trained.values);
  const auto reseeded = local_train(client, start, cfg, 1235);
  CHECK(reseeded.values != trained.values);

  auto lazy = cfg;
  lazy.local_epochs = 0;
  CHECK(local_train(client, start, lazy, 1).values == start.values);

  ClientState empty{1, {}, {}};
  CHECK_THROWS_AS(local_train(empty, start, cfg, 1), std::invalid_argument);
}

TEST_CASE("evaluate_round fills only what the context provides") {
  const auto model = init_params(Architecture{{4, 2}}, 3);
  const auto rec = evaluate_round(model, {}, 9, Phase::Resume, 12, 34);
  CHECK(rec.round == 9);
  CHECK(rec.phase == Phase::Resume);
  CHECK(rec.acc_retained == 0.0);
  CHECK(rec.acc_forgotten == 0.0);
  CHECK_FALSE(rec.bd_asr.has_value());
  CHECK(rec.elapsed_ms == 12);
  CHECK(rec.comm_rounds_cum == 34);

  const auto ds = gen_synthetic(2, 4, 5, 0.2, 1);
  BackdoorSpec spec;
  spec.trigger_mask = {0};
  spec.trigger_value = 1.0;
  spec.attack_target = 0;
  EvalContext ctx;
  ctx.retain_test = &ds;
  ctx.full_test = &ds;
  ctx.backdoor = &spec;
  const auto full = evaluate_round(model, ctx, 1, Phase::Train, 0, 1);
  CHECK(full.bd_asr.has_value());
  CHECK(full.acc_retained >= 0.0);
}

TEST_CASE("run_fl numbers rounds continuously and counts aggregations") {
  const auto ds = gen_synthetic(3, 4, 20, 0.25, 61);
  const auto part = dirichlet_partition(ds, 4, 1.0, 62);
  auto clients = make_clients(ds, part);
  FLConfig cfg;
  cfg.num_clients = 4;
  cfg.participation_fraction = 1.0;
  cfg.local_epochs = 1;
  cfg.batch_size = 8;
  cfg.max_rounds = 3;
  const auto initial = init_params(Architecture{{4, 8, 3}}, 5);

  EvalContext eval;
  eval.retain_test = &ds;
  const auto res = run_fl(initial, clients, cfg, nullptr, eval, Phase::Resume, 10, 40);
  REQUIRE(res.records.size() == 3);
  CHECK(res.records[0].round == 11);
  CHECK(res.records[2].round == 13);
  CHECK(res.records[0].comm_rounds_cum == 41);
  CHECK(res.records[2].comm_rounds_cum == 43);
  CHECK(res.state.round == 13);
  CHECK(res.state.comm_rounds == 43);
  for (const auto& rec : res.records) CHECK(rec.phase == Phase::Resume);

  const auto stop_res =
      run_fl(initial, clients, cfg, [](int, const MetricsRecord&) { return true; }, eval,
             Phase::Train, 0, 0);
  CHECK(stop_res.records.size() == 1);

  auto mismatch = cfg;
  mismatch.num_clients = 5;
  CHECK_THROWS_AS(run_fl(initial, clients, mismatch, nullptr, eval, Phase::Train), ConfigError);
}

TEST_CASE("run_fl is reproducible end to end") {
  const auto ds = gen_synthetic(3, 4, 20, 0.25, 71);
  const auto part = dirichlet_partition(ds, 5, 0.5, 72);
  FLConfig cfg;
  cfg.num_clients = 5;
  cfg.participation_fraction = 0.6;
  cfg.local_epochs = 1;
  cfg.batch_size = 8;
  cfg.max_rounds = 4;
  cfg.seed = 9;
  const auto initial = init_params(Architecture{{4, 8, 3}}, 5);
  EvalContext eval;
  eval.retain_test = &ds;

  auto clients_a = make_clients(ds, part);
  auto clients_b = make_clients(ds, part);
  const auto a = run_fl(initial, clients_a, cfg, nullptr, eval, Phase::Train);
  const auto b = run_fl(initial, clients_b, cfg, nullptr, eval, Phase::Train);
  CHECK(a.state.global_model.values == b.state.global_model.values);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].acc_retained == b.records[i].acc_retained);
    CHECK(a.records[i].comm_rounds_cum == b.records[i].comm_rounds_cum);
  }
}

TEST_CASE("run_fl reaches high accuracy on separable blobs") {
  const auto train = gen_synthetic(3, 4, 60, 0.15, 81);
  const auto test = gen_synthetic(3, 4, 20, 0.15, 82);
  const auto part = dirichlet_partition(train, 6, 1000.0, 83);
  auto clients = make_clients(train, part);
  FLConfig cfg;
  cfg.num_clients = 6;
  cfg.participation_fraction = 1.0;
  cfg.local_epochs = 2;
  cfg.batch_size = 16;
  cfg.lr = 0.1;
  cfg.max_rounds = 60;
  EvalContext eval;
  eval.retain_test = &test;
  const auto res = run_fl(init_params(Architecture{{4, 16, 3}}, 5), clients, cfg,
                          [](int, const MetricsRecord& r) { return r.acc_retained >= 0.95; }, eval,
                          Phase::Train);
  CHECK(res.records.back().acc_retained >= 0.9);
  CHECK(res.records.size() < 60);
}

TEST_CASE("clients with empty shards are skipped, not averaged") {
  const auto ds = gen_synthetic(2, 4, 20, 0.2, 91);
  const auto part = dirichlet_partition(ds, 3, 1.0, 92);
  auto clients = make_clients(ds, part);
  clients.push_back({3, {}, {}});
  FLConfig cfg;
  cfg.num_clients = 4;
  cfg.participation_fraction = 1.0;
  cfg.local_epochs = 1;
  cfg.batch_size = 8;
  cfg.max_rounds = 2;
  EvalContext eval;
  eval.retain_test = &ds;
  const auto res =
      run_fl(init_params(Architecture{{4, 8, 2}}, 5), clients, cfg, nullptr, eval, Phase::Train);
  CHECK(res.state.round == 2);
  CHECK(clients[3].local_model.values.empty());
  CHECK_FALSE(clients[0].local_model.values.empty());

  std::vector<ClientState> all_empty{{0, {}, {}}, {1, {}, {}}};
  FLConfig tiny = cfg;
  tiny.num_clients = 2;
  CHECK_THROWS_AS(
      run_fl(init_params(Architecture{{4, 8, 2}}, 5), all_empty, tiny, nullptr, eval, Phase::Train),
      ProtocolError);
}

TEST_CASE("delete_forgotten strips exactly the target classes") {
  const auto ds = gen_synthetic(3, 4, 10, 0.2, 95);
  std::vector<ClientState> clients{{0, ds, {}}, {1, subset(ds, {0, 10, 20}), {}}};
  delete_forgotten(clients, ForgetSpec{{1}});
  CHECK(clients[0].train_shard.size() == 20);
  for (int y : clients[0].train_shard.labels) CHECK(y != 1);
  CHECK(clients[1].train_shard.size() == 2);
  CHECK(clients[1].train_shard.labels == std::vector<int>{0, 2});
}
