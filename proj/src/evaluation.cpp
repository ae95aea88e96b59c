#include "fedunlearn/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "fedunlearn/errors.hpp"

namespace fedunlearn {

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::Train: return "train";
    case Phase::Unlearn: return "unlearn";
    case Phase::Resume: return "resume";
    case Phase::Retrain: return "retrain";
  }
  throw std::invalid_argument("unknown phase");
}

double accuracy(const ParamVector& model, const LabeledDataset& ds) {
  if (ds.empty()) throw std::invalid_argument("accuracy: empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (predict_class(model, ds.samples[i]) == ds.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

double bd_asr(const ParamVector& model, const LabeledDataset& clean_test,
              const BackdoorSpec& spec) {
  std::vector<int> eligible;
  for (std::size_t i = 0; i < clean_test.size(); ++i)
    if (clean_test.labels[i] != spec.attack_target) eligible.push_back(static_cast<int>(i));
  if (eligible.empty()) throw std::invalid_argument("bd_asr: no eligible samples");
  const LabeledDataset triggered = apply_trigger_only(subset(clean_test, eligible), spec);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < triggered.size(); ++i)
    if (predict_class(model, triggered.samples[i]) == spec.attack_target) ++hits;
  return static_cast<double>(hits) / static_cast<double>(triggered.size());
}

std::vector<ComparisonReport> efficiency_report(
    const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& runs) {
  long retrain_wall = -1;
  int retrain_seen = 0;
  for (const auto& [name, records] : runs) {
    if (name != "retrain") continue;
    ++retrain_seen;
    retrain_wall = 0;
    for (const auto& r : records) retrain_wall += r.elapsed_ms;
  }
  if (retrain_seen != 1) throw ConfigError("efficiency_report: exactly one retrain run required");

  std::vector<ComparisonReport> out;
  for (const auto& [name, records] : runs) {
    ComparisonReport rep;
    rep.method = name;
    rep.rounds_to_done = static_cast<int>(records.size());
    for (const auto& r : records) rep.wall_ms += r.elapsed_ms;
    rep.speedup_vs_retrain =
        static_cast<double>(std::max(retrain_wall, 1L)) / static_cast<double>(std::max(rep.wall_ms, 1L));
    out.push_back(std::move(rep));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.speedup_vs_retrain != b.speedup_vs_retrain)
      return a.speedup_vs_retrain > b.speedup_vs_retrain;
    return a.method < b.method;
  });
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "round,phase,acc_retained,acc_forgotten,bd_asr,comm_rounds_cum\n";
  for (const auto& r : records) {
    out << r.round << ',' << to_string(r.phase) << ',' << fmt(r.acc_retained) << ','
        << fmt(r.acc_forgotten) << ',' << (r.bd_asr ? fmt(*r.bd_asr) : std::string()) << ','
        << r.comm_rounds_cum << '\n';
  }
}

void write_timing_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_timing_csv: cannot open " + path);
  out << "round,phase,elapsed_ms\n";
  for (const auto& r : records)
    out << r.round << ',' << to_string(r.phase) << ',' << r.elapsed_ms << '\n';
}

void write_plot_data(const std::string& path,
                     const std::vector<std::pair<std::string, std::vector<MetricsRecord>>>& runs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_plot_data: cannot open " + path);
  out << "run,round,phase,metric,value\n";
  for (const auto& [name, records] : runs) {
    for (const auto& r : records) {
      out << name << ',' << r.round << ',' << to_string(r.phase) << ",acc_retained,"
          << fmt(r.acc_retained) << '\n';
      out << name << ',' << r.round << ',' << to_string(r.phase) << ",acc_forgotten,"
          << fmt(r.acc_forgotten) << '\n';
      if (r.bd_asr)
        out << name << ',' << r.round << ',' << to_string(r.phase) << ",bd_asr," << fmt(*r.bd_asr)
            << '\n';
    }
  }
}

}  // namespace fedunlearn
