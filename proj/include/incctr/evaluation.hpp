#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "incctr/types.hpp"

namespace incctr {

struct Checkpoint;  // trainer module

struct EvalReport {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t n_samples = 0;
  std::size_t positives = 0;
};

// Probability that a random positive outscores a random negative, ties
// counted half. O(n log n) rank formulation; the numerator is accumulated as
// an exact integer so results match pairwise counting bit for bit.
// Throws DataError when only one class is present.
double auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Mean clamped cross-entropy.
double logloss(const std::vector<double>& predictions, const std::vector<std::uint8_t>& labels,
               double epsilon = 1e-7);

EvalReport evaluate(const std::vector<double>& predictions, const std::vector<std::uint8_t>& labels,
                    double epsilon = 1e-7);

struct DelayCurve {
  std::vector<int> gaps;
  std::vector<double> auc_at_gap;
  std::vector<double> relative_degradation_pct;  // (auc0 - aucg)/auc0 * 100
};

// Evaluates the frozen checkpoint on days train_end_day+1 .. +1+max_gap.
DelayCurve delay_degradation(const Checkpoint& ckpt, const std::vector<DayBlock>& stream,
                             int train_end_day, int max_gap);

// One line of the schedule metrics log.
struct MetricsRow {
  int step = 0;
  std::string arm;
  double auc = 0.0;
  double logloss = 0.0;
  double epochs = 0.0;
  double wall_ms = 0.0;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);
std::vector<MetricsRow> parse_metrics_log(const std::string& text);

struct ArmSummary {
  std::string arm;
  std::size_t updates = 0;
  double mean_auc = 0.0;
  double mean_logloss = 0.0;
  double avg_epochs = 0.0;
  double avg_wall_ms = 0.0;
  double speedup = 0.0;  // reference avg wall / this avg wall; 0 if no reference
};

// Per-arm means plus speedup relative to `reference_arm` when present.
// Throws DataError on an empty log.
std::vector<ArmSummary> efficiency_summary(const std::vector<MetricsRow>& rows,
                                           const std::string& reference_arm = "batch0");

}  // namespace incctr
