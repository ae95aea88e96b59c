#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedunlearn/data.hpp"
#include "fedunlearn/nn.hpp"

namespace fedunlearn {

enum class Phase { Train, Unlearn, Resume, Retrain };

std::string to_string(Phase phase);

struct MetricsRecord {
  int round = 0;
  Phase phase = Phase::Train;
  double acc_retained = 0.0;
  double acc_forgotten = 0.0;
  std::optional<double> bd_asr;  // recorded only when a backdoor spec is active
  long elapsed_ms = 0;
  int comm_rounds_cum = 0;
};

// Fraction of samples whose predicted class equals the label.
double accuracy(const ParamVector& model, const LabeledDataset& ds);

// Attack success rate: the trigger is applied to every clean test sample whose
// label differs from the attack target, and we count predictions that land on
// the attack target.
double bd_asr(const ParamVector& model, const LabeledDataset& clean_test, const BackdoorSpec& spec);

struct ComparisonReport {
  std::string method;
  int rounds_to_done = 0;
  long wall_ms = 0;
  double speedup_vs_retrain = 1.0;
};

// One report per labeled run; exactly one run must be labeled "retrain".
// Sorted by speedup, descending.
std::vector<ComparisonReport> efficiency_report(
    const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& runs);

// Deterministic per-round table: round,phase,acc_retained,acc_forgotten,bd_asr,comm_rounds_cum.
// Wall times go to a separate file so identical runs stay byte-identical here.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);
void write_timing_csv(const std::string& path, const std::vector<MetricsRecord>& records);

// Long-format table for plotting: run,round,phase,metric,value.
void write_plot_data(const std::string& path,
                     const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& runs);

}  // namespace fedunlearn
