#include "fedunlearn/unlearning.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <stdexcept>

#include "fedunlearn/errors.hpp"
#include "fedunlearn/rng.hpp"

namespace fedunlearn {

namespace {

constexpr std::uint64_t kTagUnlearn = 0xf0c9e7;

// The forgetting teacher exists to hand out near-uniform targets.  A small MLP
// at full init strength still has confident per-region argmaxes the student
// would inherit on forgotten data, so its weights are shrunk until its outputs
// carry no usable class preference.
constexpr double kForgetTeacherScale = 0.1;

}  // namespace

void validate(const UnlearnConfig& cfg) {
  if (cfg.lr < 0.0) throw ConfigError("unlearn.lr must be >= 0");
  if (cfg.local_epochs < 0) throw ConfigError("unlearn.local_epochs must be >= 0");
  if (cfg.max_rounds < 1) throw ConfigError("unlearn.max_rounds must be >= 1");
  if (cfg.alpha_override && *cfg.alpha_override <= 0.0)
    throw ConfigError("unlearn.alpha_override must be > 0");
  if (cfg.forget_acc_threshold < 0.0 || cfg.forget_acc_threshold > 1.0)
    throw ConfigError("unlearn.forget_acc_threshold must be in [0,1]");
  if (cfg.retain_acc_drop_tolerance < 0.0 || cfg.retain_acc_drop_tolerance > 1.0)
    throw ConfigError("unlearn.retain_acc_drop_tolerance must be in [0,1]");
}

double resolve_alpha(long global_retain, long global_forget,
                     const std::optional<double>& override_value) {
  if (override_value) {
    if (*override_value <= 0.0) throw ConfigError("alpha override must be > 0");
    return *override_value;
  }
  if (global_retain < 1) throw ConfigError("alpha undefined without retained samples");
  if (global_forget < 1) return 1.0;
  return static_cast<double>(global_retain) / static_cast<double>(global_forget);
}

TeacherSet build_teachers(const ParamVector& original, const LabeledDataset& retain,
                          const UnlearnConfig& cfg, long global_retain, long global_forget) {
  if (retain.empty())
    throw std::invalid_argument("build_teachers: no retained samples; exclude this client");
  TeacherSet t;
  t.preserve = original;
  t.forget = init_params(original.arch, cfg.forget_teacher_seed);
  for (double& v : t.forget.values) v *= kForgetTeacherScale;
  const int num_classes = original.arch.num_classes();
  t.label_targets.reserve(retain.size());
  for (int y : retain.labels) t.label_targets.push_back(one_hot(y, num_classes));
  t.alpha = resolve_alpha(global_retain, global_forget, cfg.alpha_override);
  return t;
}

ObjectiveTerms to_terms(const UnlearnConfig& cfg) {
  return {cfg.use_preserve_teacher, cfg.use_label_teacher, cfg.double_forget_weight};
}

namespace {

ProbDist teacher_probs(const ParamVector& teacher, const std::vector<double>& sample) {
  return softmax_t(forward_logits(teacher, sample), kTemperature);
}

// Gradient over one retained batch plus one forgotten batch, with the same
// per-part normalization as unlearn_objective.
ParamVector batch_gradient(const ParamVector& student, const TeacherSet& t,
                           const LabeledDataset& retain, const std::vector<int>& retain_idx,
                           const LabeledDataset& forget, const std::vector<int>& forget_idx,
                           const ObjectiveTerms& terms) {
  const int retain_teachers = (terms.preserve ? 1 : 0) + (terms.label ? 1 : 0);
  ParamVector grad{student.arch, std::vector<double>(student.values.size(), 0.0)};

  if (!retain_idx.empty() && retain_teachers > 0) {
    std::vector<std::vector<double>> batch;
    std::vector<ProbDist> targets;
    for (int i : retain_idx) {
      if (terms.preserve) {
        batch.push_back(retain.samples[i]);
        targets.push_back(teacher_probs(t.preserve, retain.samples[i]));
      }
      if (terms.label) {
        batch.push_back(retain.samples[i]);
        targets.push_back(t.label_targets[i]);
      }
    }
    // weight = number of teacher entries per sample, so the mean over entries
    // becomes a mean over samples of their summed KL terms
    const std::vector<double> w(batch.size(), static_cast<double>(retain_teachers));
    add_inplace(grad, backprop_kl(student, batch, targets, w));
  }

  if (!forget_idx.empty()) {
    std::vector<std::vector<double>> batch;
    std::vector<ProbDist> targets;
    for (int i : forget_idx) {
      batch.push_back(forget.samples[i]);
      targets.push_back(teacher_probs(t.forget, forget.samples[i]));
    }
    const std::vector<double> w(batch.size(), terms.forget_weight(t.alpha));
    add_inplace(grad, backprop_kl(student, batch, targets, w));
  }
  return grad;
}

std::vector<int> iota_vec(std::size_t n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

double unlearn_objective(const ParamVector& student, const TeacherSet& teachers,
                         const LabeledDataset& retain, const LabeledDataset& forget,
                         const ObjectiveTerms& terms) {
  if (!retain.empty() && teachers.label_targets.size() != retain.size())
    throw std::invalid_argument("unlearn_objective: label targets misaligned with retained set");
  double total = 0.0;
  if (!retain.empty()) {
    double s = 0.0;
    for (std::size_t i = 0; i < retain.size(); ++i) {
      const ProbDist student_probs = teacher_probs(student, retain.samples[i]);
      if (terms.preserve)
        s += kl_div(teacher_probs(teachers.preserve, retain.samples[i]), student_probs);
      if (terms.label) s += kl_div(teachers.label_targets[i], student_probs);
    }
    total += s / static_cast<double>(retain.size());
  }
  if (!forget.empty()) {
    double s = 0.0;
    for (std::size_t i = 0; i < forget.size(); ++i)
      s += kl_div(teacher_probs(teachers.forget, forget.samples[i]),
                  teacher_probs(student, forget.samples[i]));
    total += terms.forget_weight(teachers.alpha) * s / static_cast<double>(forget.size());
  }
  return total;
}

ParamVector unlearn_gradient(const ParamVector& student, const TeacherSet& teachers,
                             const LabeledDataset& retain, const LabeledDataset& forget,
                             const ObjectiveTerms& terms) {
  return batch_gradient(student, teachers, retain, iota_vec(retain.size()), forget,
                        iota_vec(forget.size()), terms);
}

ParamVector client_unlearn_round(const ClientState& client, const LabeledDataset& retain,
                                 const LabeledDataset& forget, const TeacherSet& teachers,
                                 const UnlearnConfig& cfg, int batch_size, std::uint64_t seed) {
  validate(cfg);
  if (batch_size < 1) throw std::invalid_argument("client_unlearn_round: batch_size must be >= 1");
  if (retain.empty()) throw std::invalid_argument("client_unlearn_round: no retained samples");
  if (teachers.label_targets.size() != retain.size())
    throw std::invalid_argument("client_unlearn_round: label targets misaligned");

  const auto terms = to_terms(cfg);
  ParamVector model = client.local_model;
  auto rng = make_engine(seed);
  auto r_order = iota_vec(retain.size());
  auto f_order = iota_vec(forget.size());
  const std::size_t bs = static_cast<std::size_t>(batch_size);

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(r_order.begin(), r_order.end(), rng);
    if (!f_order.empty()) std::shuffle(f_order.begin(), f_order.end(), rng);
    const std::size_t steps = (r_order.size() + bs - 1) / bs;
    const std::size_t f_batches = f_order.empty() ? 0 : (f_order.size() + bs - 1) / bs;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t r_lo = s * bs;
      const std::size_t r_hi = std::min(r_order.size(), r_lo + bs);
      const std::vector<int> retain_idx(r_order.begin() + r_lo, r_order.begin() + r_hi);
      std::vector<int> forget_idx;
      if (f_batches > 0) {
        const std::size_t fb = s % f_batches;  // forgotten batches cycle under the retained ones
        const std::size_t f_lo = fb * bs;
        const std::size_t f_hi = std::min(f_order.size(), f_lo + bs);
        forget_idx.assign(f_order.begin() + f_lo, f_order.begin() + f_hi);
      }
      const auto grad = batch_gradient(model, teachers, retain, retain_idx, forget, forget_idx, terms);
      model = sgd_step(model, grad, cfg.lr);
    }
  }
  return model;
}

bool forgetting_criterion(const ParamVector& model, const LabeledDataset& eval_forget,
                          const LabeledDataset& eval_retain, double pre_unlearn_retain_acc,
                          const UnlearnConfig& cfg) {
  validate(cfg);
  if (eval_retain.empty())
    throw std::invalid_argument("forgetting_criterion: empty retained eval set");
  const bool forgotten =
      eval_forget.empty() || accuracy(model, eval_forget) <= cfg.forget_acc_threshold;
  const bool preserved =
      accuracy(model, eval_retain) >= pre_unlearn_retain_acc - cfg.retain_acc_drop_tolerance;
  return forgotten && preserved;
}

UnlearnOutcome run_unlearning(const ParamVector& original, std::vector<ClientState>& clients,
                              const ForgetSpec& spec, const UnlearnConfig& cfg,
                              const FLConfig& fl_cfg, const EvalContext& eval, int start_round,
                              int start_comm) {
  validate(cfg);
  validate(spec, original.arch.num_classes());
  if (!eval.retain_test || eval.retain_test->empty())
    throw ConfigError("run_unlearning: a nonempty retained eval set is required");
  static const LabeledDataset kEmpty;
  const LabeledDataset& eval_forget = eval.forget_test ? *eval.forget_test : kEmpty;

  struct Ctx {
    std::size_t pos;
    LabeledDataset retain;
    LabeledDataset forget;
    TeacherSet teachers;
  };

  long global_retain = 0, global_forget = 0;
  std::vector<std::pair<std::size_t, std::pair<LabeledDataset, LabeledDataset>>> splits;
  UnlearnOutcome outcome;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    auto parts = split_forget_retain(clients[i].train_shard, spec);
    global_forget += static_cast<long>(parts.first.size());
    global_retain += static_cast<long>(parts.second.size());
    if (parts.second.empty())
      outcome.excluded_clients.push_back(clients[i].id);
    else
      splits.push_back({i, std::move(parts)});
  }

  std::vector<Ctx> ctxs;
  ctxs.reserve(splits.size());
  for (auto& [pos, parts] : splits) {
    Ctx ctx{pos, std::move(parts.second), std::move(parts.first), {}};
    ctx.teachers = build_teachers(original, ctx.retain, cfg, global_retain, global_forget);
    ctxs.push_back(std::move(ctx));
  }
  if (ctxs.empty()) throw ConfigError("run_unlearning: every client lost its retained data");
  outcome.alpha = ctxs.front().teachers.alpha;

  const double pre_retain_acc = accuracy(original, *eval.retain_test);
  ParamVector global = original;
  int round = start_round;
  int comm = start_comm;

  for (int r = 1; r <= cfg.max_rounds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    round += 1;
    std::vector<ClientUpdate> updates;
    for (auto& ctx : ctxs) {
      auto& cl = clients[ctx.pos];
      cl.local_model = global;
      const auto seed = derive_seed(derive_seed(fl_cfg.seed, kTagUnlearn, round),
                                    static_cast<std::uint64_t>(cl.id));
      cl.local_model = client_unlearn_round(cl, ctx.retain, ctx.forget, ctx.teachers, cfg,
                                            fl_cfg.batch_size, seed);
      updates.push_back({cl.id, cl.local_model, static_cast<long>(cl.train_shard.size())});
    }
    global = fedavg(updates);
    comm += 1;
    outcome.rounds_used = r;

    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    outcome.per_round.push_back(evaluate_round(global, eval, round, Phase::Unlearn,
                                               static_cast<long>(elapsed), comm));
    outcome.criterion_met =
        forgetting_criterion(global, eval_forget, *eval.retain_test, pre_retain_acc, cfg);
    if (outcome.criterion_met && cfg.stop_on_criterion) break;
  }

  delete_forgotten(clients, spec);
  outcome.unlearned_global = std::move(global);
  return outcome;
}

std::vector<UnlearnOutcome> run_multi_class_unlearning(
    const ParamVector& original, std::vector<ClientState>& clients,
    const std::vector<ForgetSpec>& specs, const UnlearnConfig& cfg, const FLConfig& fl_cfg,
    const LabeledDataset& test_set, int start_round, int start_comm) {
  if (specs.empty()) throw ConfigError("run_multi_class_unlearning: no specs");
  std::vector<int> seen;
  for (const auto& spec : specs) {
    validate(spec, original.arch.num_classes());
    for (int c : spec.target_classes) {
      if (std::find(seen.begin(), seen.end(), c) != seen.end())
        throw ConfigError("run_multi_class_unlearning: specs must be pairwise disjoint");
      seen.push_back(c);
    }
  }

  std::vector<UnlearnOutcome> outcomes;
  ParamVector current = original;
  int round = start_round;
  int comm = start_comm;
  std::vector<int> gone;

  for (const auto& spec : specs) {
    LabeledDataset forget_eval, retain_eval;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      const int y = test_set.labels[i];
      if (spec.contains(y)) {
        forget_eval.samples.push_back(test_set.samples[i]);
        forget_eval.labels.push_back(y);
      } else if (std::find(gone.begin(), gone.end(), y) == gone.end()) {
        retain_eval.samples.push_back(test_set.samples[i]);
        retain_eval.labels.push_back(y);
      }
    }
    EvalContext eval{&retain_eval, &forget_eval, nullptr, nullptr};
    auto outcome = run_unlearning(current, clients, spec, cfg, fl_cfg, eval, round, comm);
    current = outcome.unlearned_global;
    round += outcome.rounds_used;
    comm += outcome.rounds_used;
    gone.insert(gone.end(), spec.target_classes.begin(), spec.target_classes.end());
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

}  // namespace fedunlearn
