#pragma once

// Evaluation metrics: macro P/R/F1 over non-NA relations, the aggregate
// PR curve with trapezoid area, threshold sweeps for baseline heads, and the
// paired t-test used for significance reporting.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "capsrel/objective.hpp"

namespace capsrel {

struct PrPoint {
  double score = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ClassStats {
  int cls = 0;
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct EvalReport {
  double precision = 0.0;  // macro over classes with any gold or predicted fact
  double recall = 0.0;
  double f1 = 0.0;
  double pr_area = 0.0;
  std::vector<ClassStats> per_class;
  std::vector<PrPoint> pr_points;  // one per (sentence, relation) candidate, score-descending

  nlohmann::json to_json() const;
  void write_pr_csv(std::ostream& os) const;  // header + score,precision,recall rows
};

// gold[i] / pred[i].labels are ascending relation-index sets for sentence i
// (empty = NA); pred[i].scores holds one score per relation and feeds the PR
// curve. Classes that never occur in gold nor in predictions are left out of
// the macro averages so a perfect model scores exactly 1.
EvalReport evaluate_sets(const std::vector<std::vector<int>>& gold,
                         const std::vector<PredictionResult>& pred, int relation_count);

struct SweepResult {
  double threshold = 0.0;
  EvalReport report;
};

// Decodes probs[i][j] > threshold for each threshold in {0.1, ..., 0.9} and
// keeps the best macro-F1; ties resolve to the lowest threshold.
SweepResult threshold_sweep(const std::vector<std::vector<int>>& gold,
                            const std::vector<std::vector<double>>& probs, int relation_count);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // 95% CI of the mean difference
  double mean_diff = 0.0;
  bool degenerate = false;  // zero variance of differences
};

// Two-sided paired t-test of a vs b (n >= 2, equal lengths).
TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

// Student-t helpers (exposed for direct verification against tables).
double student_t_two_sided_p(double t, int df);
double student_t_quantile_975(int df);  // t with two-sided p = 0.05

}  // namespace capsrel
