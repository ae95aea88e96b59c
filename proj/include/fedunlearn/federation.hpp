#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fedunlearn/data.hpp"
#include "fedunlearn/evaluation.hpp"
#include "fedunlearn/nn.hpp"

namespace fedunlearn {

struct FLConfig {
  int num_clients = 20;
  double participation_fraction = 0.25;
  int local_epochs = 2;
  int batch_size = 32;
  double lr = 0.05;
  int max_rounds = 300;
  double stop_accuracy = 0.95;
  std::uint64_t seed = 0;
};

void validate(const FLConfig& cfg);

struct ClientState {
  int id = 0;
  LabeledDataset train_shard;
  ParamVector local_model;
};

struct GlobalState {
  int round = 0;        // absolute round counter, shared across phases
  int comm_rounds = 0;  // aggregate steps executed so far
  ParamVector global_model;
};

// The only record that crosses the client/server boundary: parameters plus a
// sample count.  Client datasets never leave ClientState.
struct ClientUpdate {
  int client_id = 0;
  ParamVector params;
  long sample_count = 0;
};

// max(1, round(participation_fraction * num_clients)) distinct ids, sorted
// ascending; a pure function of (cfg.seed, round).
std::vector<int> sample_clients(const FLConfig& cfg, int round);

// Mini-batch SGD on KL(one-hot label || student), i.e. cross-entropy, starting
// from global_model.
ParamVector local_train(const ClientState& client, const ParamVector& global_model,
                        const FLConfig& cfg, std::uint64_t seed);

// Sample-count-weighted parameter average, folded in the given order.  Callers
// pass updates in ascending client id order.
ParamVector fedavg(const std::vector<ClientUpdate>& updates);

// Server-held evaluation data used for per-round metrics.
struct EvalContext {
  const LabeledDataset* retain_test = nullptr;
  const LabeledDataset* forget_test = nullptr;  // may be null or empty
  const LabeledDataset* full_test = nullptr;    // needed for BD_ASR
  const BackdoorSpec* backdoor = nullptr;       // when set, BD_ASR is recorded
};

MetricsRecord evaluate_round(const ParamVector& model, const EvalContext& eval, int round,
                             Phase phase, long elapsed_ms, int comm_rounds_cum);

using StopPredicate = std::function<bool(int round, const MetricsRecord&)>;

struct FLRunResult {
  GlobalState state;
  std::vector<MetricsRecord> records;
};

// Runs up to cfg.max_rounds FedAvg rounds; one metrics record per round.  The
// same loop serves initial training, retraining from scratch and post-unlearning
// resumption; phase only tags the records.  Round numbering continues from
// start_round.
FLRunResult run_fl(const ParamVector& initial, std::vector<ClientState>& clients,
                   const FLConfig& cfg, const StopPredicate& stop, const EvalContext& eval,
                   Phase phase, int start_round = 0, int start_comm = 0);

// Drops every sample of the spec's classes from all client shards.
void delete_forgotten(std::vector<ClientState>& clients, const ForgetSpec& spec);

}  // namespace fedunlearn
