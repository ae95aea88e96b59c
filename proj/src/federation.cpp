#include "fedunlearn/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fedunlearn/errors.hpp"
#include "fedunlearn/rng.hpp"

namespace fedunlearn {

namespace {

constexpr std::uint64_t kTagSampling = 0xc11e57;
constexpr std::uint64_t kTagLocalTrain = 0x7ea1;

}  // namespace

void validate(const FLConfig& cfg) {
  if (cfg.num_clients < 2) throw ConfigError("fl.num_clients must be >= 2");
  if (cfg.participation_fraction <= 0.0 || cfg.participation_fraction > 1.0)
    throw ConfigError("fl.participation_fraction must be in (0,1]");
  if (cfg.local_epochs < 0) throw ConfigError("fl.local_epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("fl.batch_size must be >= 1");
  if (cfg.lr < 0.0) throw ConfigError("fl.lr must be >= 0");
  if (cfg.max_rounds < 0) throw ConfigError("fl.max_rounds must be >= 0");
  if (cfg.stop_accuracy < 0.0 || cfg.stop_accuracy > 1.0)
    throw ConfigError("fl.stop_accuracy must be in [0,1]");
}

std::vector<int> sample_clients(const FLConfig& cfg, int round) {
  validate(cfg);
  const int n = cfg.num_clients;
  int k = static_cast<int>(std::lround(cfg.participation_fraction * n));
  k = std::clamp(k, 1, n);
  auto rng = make_engine(derive_seed(cfg.seed, kTagSampling, static_cast<std::uint64_t>(round)));
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

ParamVector local_train(const ClientState& client, const ParamVector& global_model,
                        const FLConfig& cfg, std::uint64_t seed) {
  const auto& ds = client.train_shard;
  if (ds.empty()) throw std::invalid_argument("local_train: empty shard");
  const int num_classes = global_model.arch.num_classes();

  ParamVector model = global_model;
  auto rng = make_engine(seed);
  std::vector<int> order(ds.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::vector<double>> batch;
      std::vector<ProbDist> targets;
      batch.reserve(stop - start);
      targets.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(ds.samples[order[i]]);
        targets.push_back(one_hot(ds.labels[order[i]], num_classes));
      }
      const std::vector<double> weights(batch.size(), 1.0);
      model = sgd_step(model, backprop_kl(model, batch, targets, weights), cfg.lr);
    }
  }
  return model;
}

ParamVector fedavg(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw ProtocolError("fedavg: no updates");
  const auto& arch = updates.front().params.arch;
  long total = 0;
  for (const auto& u : updates) {
    if (!(u.params.arch == arch)) throw ProtocolError("fedavg: architecture mismatch");
    if (u.params.values.size() != updates.front().params.values.size())
      throw ProtocolError("fedavg: parameter length mismatch");
    if (u.sample_count < 1) throw ProtocolError("fedavg: sample_count must be >= 1");
    total += u.sample_count;
  }
  ParamVector out{arch, std::vector<double>(updates.front().params.values.size(), 0.0)};
  for (const auto& u : updates) {
    const double w = static_cast<double>(u.sample_count) / static_cast<double>(total);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += w * u.params.values[i];
  }
  for (double v : out.values)
    if (!std::isfinite(v)) throw ProtocolError("fedavg: non-finite aggregate");
  return out;
}

MetricsRecord evaluate_round(const ParamVector& model, const EvalContext& eval, int round,
                             Phase phase, long elapsed_ms, int comm_rounds_cum) {
  MetricsRecord rec;
  rec.round = round;
  rec.phase = phase;
  rec.elapsed_ms = elapsed_ms;
  rec.comm_rounds_cum = comm_rounds_cum;
  if (eval.retain_test && !eval.retain_test->empty())
    rec.acc_retained = accuracy(model, *eval.retain_test);
  if (eval.forget_test && !eval.forget_test->empty())
    rec.acc_forgotten = accuracy(model, *eval.forget_test);
  if (eval.backdoor && eval.full_test) rec.bd_asr = bd_asr(model, *eval.full_test, *eval.backdoor);
  return rec;
}

FLRunResult run_fl(const ParamVector& initial, std::vector<ClientState>& clients,
                   const FLConfig& cfg, const StopPredicate& stop, const EvalContext& eval,
                   Phase phase, int start_round, int start_comm) {
  validate(cfg);
  if (static_cast<int>(clients.size()) != cfg.num_clients)
    throw ConfigError("run_fl: client count does not match fl.num_clients");

  FLRunResult res;
  res.state = GlobalState{start_round, start_comm, initial};
  for (int r = 0; r < cfg.max_rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const int round = res.state.round + 1;
    const auto ids = sample_clients(cfg, round);

    std::vector<ClientUpdate> updates;
    for (int id : ids) {
      auto& cl = clients[id];
      if (cl.train_shard.empty()) continue;  // skipped; visible by absence from the update set
      const auto seed = derive_seed(derive_seed(cfg.seed, kTagLocalTrain, round),
                                    static_cast<std::uint64_t>(id));
      cl.local_model = local_train(cl, res.state.global_model, cfg, seed);
      updates.push_back({id, cl.local_model, static_cast<long>(cl.train_shard.size())});
    }
    res.state.global_model = fedavg(updates);
    res.state.round = round;
    res.state.comm_rounds += 1;

    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    res.records.push_back(evaluate_round(res.state.global_model, eval, round, phase,
                                         static_cast<long>(elapsed), res.state.comm_rounds));
    if (stop && stop(round, res.records.back())) break;
  }
  return res;
}

void delete_forgotten(std::vector<ClientState>& clients, const ForgetSpec& spec) {
  for (auto& cl : clients) {
    LabeledDataset kept;
    for (std::size_t i = 0; i < cl.train_shard.size(); ++i) {
      if (spec.contains(cl.train_shard.labels[i])) continue;
      kept.samples.push_back(std::move(cl.train_shard.samples[i]));
      kept.labels.push_back(cl.train_shard.labels[i]);
    }
    cl.train_shard = std::move(kept);
  }
}

}  // namespace fedunlearn
