#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedunlearn/data.hpp"
#include "fedunlearn/federation.hpp"
#include "fedunlearn/nn.hpp"

namespace fedunlearn {

struct UnlearnConfig {
  double lr = 0.1;  // twice the training rate: one aggressive round usually
                    // snaps the forgotten class to zero, and the shrunk forget
                    // teacher leaves no preference for it to relapse toward
  int local_epochs = 1;
  int max_rounds = 5;
  std::optional<double> alpha_override;
  double forget_acc_threshold = 0.02;
  double retain_acc_drop_tolerance = 0.02;
  std::uint64_t forget_teacher_seed = 99;
  // The combined objective carries the forgetting term twice; switch off to
  // collapse it to a single alpha-weighted term.
  bool double_forget_weight = true;
  bool use_preserve_teacher = true;
  bool use_label_teacher = true;
  bool stop_on_criterion = true;  // sweeps disable this to record full curves
};

void validate(const UnlearnConfig& cfg);

// The three teachers plus the balance weight, fixed for one client's rounds.
// preserve is a copy of the trained model, forget an untrained re-init of the
// same architecture, and label_targets one-hot rows aligned with the client's
// retained samples.
struct TeacherSet {
  ParamVector preserve;
  ParamVector forget;
  std::vector<ProbDist> label_targets;
  double alpha = 1.0;
};

// retained/forgotten ratio from global counts, unless overridden.  A globally
// empty forget set makes the forget term vacuous, so alpha falls back to 1.
double resolve_alpha(long global_retain, long global_forget,
                     const std::optional<double>& override_value);

TeacherSet build_teachers(const ParamVector& original, const LabeledDataset& retain,
                          const UnlearnConfig& cfg, long global_retain, long global_forget);

// Which objective terms are active; sweeps restrict these.
struct ObjectiveTerms {
  bool preserve = true;
  bool label = true;
  bool doubled = true;

  double forget_weight(double alpha) const { return (doubled ? 2.0 : 1.0) * alpha; }
};

ObjectiveTerms to_terms(const UnlearnConfig& cfg);

// Mean over retained samples of the preserve and label KL terms, plus the
// alpha-weighted mean forgetting KL over forgotten samples.
double unlearn_objective(const ParamVector& student, const TeacherSet& teachers,
                         const LabeledDataset& retain, const LabeledDataset& forget,
                         const ObjectiveTerms& terms = {});

// Full-batch gradient of unlearn_objective with respect to the student.
ParamVector unlearn_gradient(const ParamVector& student, const TeacherSet& teachers,
                             const LabeledDataset& retain, const LabeledDataset& forget,
                             const ObjectiveTerms& terms = {});

// One local round: local_epochs of mini-batch SGD on the objective, starting
// from the client's current model.  Teachers are never modified.
ParamVector client_unlearn_round(const ClientState& client, const LabeledDataset& retain,
                                 const LabeledDataset& forget, const TeacherSet& teachers,
                                 const UnlearnConfig& cfg, int batch_size, std::uint64_t seed);

// True when forgotten-class accuracy is at or below the threshold and retained
// accuracy has dropped no more than the tolerance from its pre-unlearning value.
// An empty forgotten eval set satisfies the first condition vacuously.
bool forgetting_criterion(const ParamVector& model, const LabeledDataset& eval_forget,
                          const LabeledDataset& eval_retain, double pre_unlearn_retain_acc,
                          const UnlearnConfig& cfg);

struct UnlearnOutcome {
  ParamVector unlearned_global;
  int rounds_used = 0;
  bool criterion_met = false;
  double alpha = 1.0;
  std::vector<int> excluded_clients;  // clients with no retained data
  std::vector<MetricsRecord> per_round;
};

// Orchestrates class-level unlearning: splits every shard, builds teachers from
// globally shared counts and one shared forget-teacher seed, then loops local
// rounds with all clients participating and sample-count-weighted aggregation
// until the forgetting criterion holds or max_rounds is exhausted.  Forgotten
// samples are deleted from the shards before returning.
UnlearnOutcome run_unlearning(const ParamVector& original, std::vector<ClientState>& clients,
                              const ForgetSpec& spec, const UnlearnConfig& cfg,
                              const FLConfig& fl_cfg, const EvalContext& eval,
                              int start_round = 0, int start_comm = 0);

// Sequential single-class runs; evaluation splits shrink as classes are removed.
std::vector<UnlearnOutcome> run_multi_class_unlearning(
    const ParamVector& original, std::vector<ClientState>& clients,
    const std::vector<ForgetSpec>& specs, const UnlearnConfig& cfg, const FLConfig& fl_cfg,
    const LabeledDataset& test_set, int start_round = 0, int start_comm = 0);

}  // namespace fedunlearn
