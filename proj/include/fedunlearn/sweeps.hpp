#pragma once

#include <string>
#include <vector>

#include "fedunlearn/unlearning.hpp"

namespace fedunlearn {

// Teacher subset for an ablation run.  The forgetting teacher is mandatory.
struct TeacherCombo {
  bool preserve = true;
  bool forget = true;
  bool label = true;

  std::string name() const;
};

struct SweepRun {
  std::string label;
  UnlearnOutcome outcome;
};

// One unlearning run per combo, each from a fresh copy of the clients and with
// early stopping disabled, so the per-round curves are complete.
std::vector<SweepRun> ablation_suite(const ParamVector& original,
                                     const std::vector<ClientState>& clients,
                                     const ForgetSpec& spec, const UnlearnConfig& base_cfg,
                                     const FLConfig& fl_cfg, const EvalContext& eval,
                                     const std::vector<TeacherCombo>& combos);

// One unlearning run per alpha override, same isolation as ablation_suite.
std::vector<SweepRun> alpha_sweep(const ParamVector& original,
                                  const std::vector<ClientState>& clients, const ForgetSpec& spec,
                                  const UnlearnConfig& base_cfg, const FLConfig& fl_cfg,
                                  const EvalContext& eval, const std::vector<double>& alphas);

}  // namespace fedunlearn
