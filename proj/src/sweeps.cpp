#include "fedunlearn/sweeps.hpp"

#include <cstdio>

#include "fedunlearn/errors.hpp"

namespace fedunlearn {

std::string TeacherCombo::name() const {
  std::string s;
  if (preserve) s += "P+";
  if (forget) s += "F+";
  if (label) s += "L+";
  if (!s.empty()) s.pop_back();
  return s;
}

std::vector<SweepRun> ablation_suite(const ParamVector& original,
                                     const std::vector<ClientState>& clients,
                                     const ForgetSpec& spec, const UnlearnConfig& base_cfg,
                                     const FLConfig& fl_cfg, const EvalContext& eval,
                                     const std::vector<TeacherCombo>& combos) {
  if (combos.empty()) throw ConfigError("ablation_suite: no combos");
  for (const auto& combo : combos)
    if (!combo.forget)
      throw ConfigError("ablation_suite: every combo must include the forgetting teacher");

  std::vector<SweepRun> out;
  for (const auto& combo : combos) {
    UnlearnConfig cfg = base_cfg;
    cfg.use_preserve_teacher = combo.preserve;
    cfg.use_label_teacher = combo.label;
    cfg.stop_on_criterion = false;
    auto fresh = clients;
    out.push_back({combo.name(), run_unlearning(original, fresh, spec, cfg, fl_cfg, eval)});
  }
  return out;
}

std::vector<SweepRun> alpha_sweep(const ParamVector& original,
                                  const std::vector<ClientState>& clients, const ForgetSpec& spec,
                                  const UnlearnConfig& base_cfg, const FLConfig& fl_cfg,
                                  const EvalContext& eval, const std::vector<double>& alphas) {
  if (alphas.empty()) throw ConfigError("alpha_sweep: no alphas");
  std::vector<SweepRun> out;
  for (double a : alphas) {
    if (a <= 0.0) throw ConfigError("alpha_sweep: alpha must be > 0");
    UnlearnConfig cfg = base_cfg;
    cfg.alpha_override = a;
    cfg.stop_on_criterion = false;
    auto fresh = clients;
    char label[32];
    std::snprintf(label, sizeof label, "alpha=%g", a);
    out.push_back({label, run_unlearning(original, fresh, spec, cfg, fl_cfg, eval)});
  }
  return out;
}

}  // namespace fedunlearn
