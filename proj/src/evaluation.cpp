#include "incctr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "incctr/ctr_model.hpp"
#include "incctr/trainer.hpp"

namespace incctr {

double auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) throw DataError("score/label length mismatch");
  const std::size_t n = scores.size();
  std::uint64_t n_pos = 0;
  for (auto y : labels) n_pos += y;
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUC undefined on single-class input");

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::uint32_t a, std::uint32_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum, kept integral so tied groups contribute
  // exact halves.
  std::uint64_t rank2_sum_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1..j (1-based); every tied element gets the average rank,
    // doubled: (i+1 + j).
    const std::uint64_t rank2 = static_cast<std::uint64_t>(i) + 1 + j;
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]]) rank2_sum_pos += rank2;
    i = j;
  }
  const std::uint64_t numer2 = rank2_sum_pos - n_pos * (n_pos + 1);
  return static_cast<double>(numer2) / (2.0 * static_cast<double>(n_pos) * n_neg);
}

double logloss(const std::vector<double>& predictions, const std::vector<std::uint8_t>& labels,
               double epsilon) {
  if (predictions.size() != labels.size()) throw DataError("prediction/label length mismatch");
  if (predictions.empty()) throw DataError("logloss undefined on empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    sum += ce_loss(labels[i], predictions[i], epsilon);
  return sum / static_cast<double>(predictions.size());
}

EvalReport evaluate(const std::vector<double>& predictions, const std::vector<std::uint8_t>& labels,
                    double epsilon) {
  EvalReport report;
  report.n_samples = labels.size();
  for (auto y : labels) report.positives += y;
  report.auc = auc(predictions, labels);
  report.logloss = logloss(predictions, labels, epsilon);
  return report;
}

DelayCurve delay_degradation(const Checkpoint& ckpt, const std::vector<DayBlock>& stream,
                             int train_end_day, int max_gap) {
  std::map<int, const DayBlock*> by_day;
  for (const auto& block : stream) by_day[block.day_index] = &block;

  DelayCurve curve;
  for (int gap = 0; gap <= max_gap; ++gap) {
    const int day = train_end_day + 1 + gap;
    auto it = by_day.find(day);
    if (it == by_day.end())
      throw DataError("stream does not extend to gap " + std::to_string(gap) + " (day " +
                      std::to_string(day) + ")");
    InferenceResult inf = inference(ckpt, *it->second);
    curve.gaps.push_back(gap);
    curve.auc_at_gap.push_back(auc(inf.predictions, it->second->labels));
  }
  const double auc0 = curve.auc_at_gap.front();
  for (double a : curve.auc_at_gap)
    curve.relative_degradation_pct.push_back((auc0 - a) / auc0 * 100.0);
  return curve;
}

std::string metrics_header() { return "step\tarm\tauc\tlogloss\tepochs\twall_ms"; }

std::string format_metrics_row(const MetricsRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d\t%s\t%.9f\t%.9f\t%g\t%.3f", row.step, row.arm.c_str(),
                row.auc, row.logloss, row.epochs, row.wall_ms);
  return buf;
}

std::vector<MetricsRow> parse_metrics_log(const std::string& text) {
  std::vector<MetricsRow> rows;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (first && line == metrics_header()) {
      first = false;
      continue;
    }
    first = false;
    MetricsRow row;
    char arm[128];
    if (std::sscanf(line.c_str(), "%d\t%127[^\t]\t%lf\t%lf\t%lf\t%lf", &row.step, arm, &row.auc,
                    &row.logloss, &row.epochs, &row.wall_ms) != 6)
      throw DataError("bad metrics line " + std::to_string(line_no) + ": " + line);
    row.arm = arm;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ArmSummary> efficiency_summary(const std::vector<MetricsRow>& rows,
                                           const std::string& reference_arm) {
  if (rows.empty()) throw DataError("metrics log is empty");
  std::map<std::string, ArmSummary> by_arm;
  for (const auto& row : rows) {
    ArmSummary& s = by_arm[row.arm];
    s.arm = row.arm;
    ++s.updates;
    s.mean_auc += row.auc;
    s.mean_logloss += row.logloss;
    s.avg_epochs += row.epochs;
    s.avg_wall_ms += row.wall_ms;
  }
  for (auto& [_, s] : by_arm) {
    const double n = static_cast<double>(s.updates);
    s.mean_auc /= n;
    s.mean_logloss /= n;
    s.avg_epochs /= n;
    s.avg_wall_ms /= n;
  }
  double ref_wall = 0.0;
  auto ref = by_arm.find(reference_arm);
  if (ref != by_arm.end()) ref_wall = ref->second.avg_wall_ms;

  std::vector<ArmSummary> out;
  for (auto& [_, s] : by_arm) {
    s.speedup = (ref_wall > 0.0 && s.avg_wall_ms > 0.0) ? ref_wall / s.avg_wall_ms : 0.0;
    out.push_back(s);
  }
  return out;
}

}  // namespace incctr
