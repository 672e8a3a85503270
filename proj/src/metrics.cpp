#include "capsrel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "capsrel/errors.hpp"

namespace capsrel {

namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

bool contains(const std::vector<int>& sorted, int x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["pr_area"] = pr_area;
  j["per_class"] = nlohmann::json::array();
  for (const auto& c : per_class) {
    j["per_class"].push_back({{"class", c.cls},
                              {"tp", c.tp},
                              {"fp", c.fp},
                              {"fn", c.fn},
                              {"precision", c.precision},
                              {"recall", c.recall},
                              {"f1", c.f1}});
  }
  return j;
}

void EvalReport::write_pr_csv(std::ostream& os) const {
  os << "score,precision,recall\n";
  for (const auto& p : pr_points) os << p.score << ',' << p.precision << ',' << p.recall << '\n';
}

EvalReport evaluate_sets(const std::vector<std::vector<int>>& gold,
                         const std::vector<PredictionResult>& pred, int relation_count) {
  if (gold.empty()) throw ContractError("evaluate_sets on an empty corpus");
  if (gold.size() != pred.size())
    throw ContractError("evaluate_sets: " + std::to_string(gold.size()) + " gold sets vs " +
                        std::to_string(pred.size()) + " predictions");

  EvalReport rep;
  rep.per_class.resize(relation_count);
  for (int j = 0; j < relation_count; ++j) rep.per_class[j].cls = j;

  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (int j : pred[i].labels) {
      if (contains(gold[i], j))
        rep.per_class[j].tp += 1;
      else
        rep.per_class[j].fp += 1;
    }
    for (int j : gold[i])
      if (!contains(pred[i].labels, j)) rep.per_class[j].fn += 1;
  }

  int active = 0;
  for (auto& c : rep.per_class) {
    c.precision = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    c.recall = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    c.f1 = safe_div(2.0 * c.precision * c.recall, c.precision + c.recall);
    if (c.tp + c.fp + c.fn > 0) {
      active += 1;
      rep.precision += c.precision;
      rep.recall += c.recall;
      rep.f1 += c.f1;
    }
  }
  if (active > 0) {
    rep.precision /= active;
    rep.recall /= active;
    rep.f1 /= active;
  }

  // Aggregate PR curve over every (sentence, relation) candidate, ranked by
  // score; ties break by sentence then relation index so the curve is
  // deterministic.
  struct Cand {
    double score;
    int sent, rel;
    bool positive;
  };
  std::vector<Cand> cands;
  long total_pos = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (static_cast<int>(pred[i].scores.size()) != relation_count)
      throw ContractError("evaluate_sets: sentence " + std::to_string(i) + " carries " +
                          std::to_string(pred[i].scores.size()) + " scores for " +
                          std::to_string(relation_count) + " relations");
    for (int j = 0; j < relation_count; ++j) {
      bool pos = contains(gold[i], j);
      total_pos += pos ? 1 : 0;
      cands.push_back({pred[i].scores[j], static_cast<int>(i), j, pos});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.sent != b.sent) return a.sent < b.sent;
    return a.rel < b.rel;
  });

  rep.pr_points.reserve(cands.size());
  long tp = 0;
  for (std::size_t k = 0; k < cands.size(); ++k) {
    tp += cands[k].positive ? 1 : 0;
    PrPoint pt;
    pt.score = cands[k].score;
    pt.precision = static_cast<double>(tp) / static_cast<double>(k + 1);
    pt.recall = safe_div(static_cast<double>(tp), static_cast<double>(total_pos));
    rep.pr_points.push_back(pt);
  }

  // Trapezoid area in recall, anchored at (R=0, P=first point's precision).
  if (!rep.pr_points.empty() && total_pos > 0) {
    double prev_r = 0.0, prev_p = rep.pr_points.front().precision;
    for (const auto& pt : rep.pr_points) {
      rep.pr_area += (pt.recall - prev_r) * 0.5 * (pt.precision + prev_p);
      prev_r = pt.recall;
      prev_p = pt.precision;
    }
  }
  return rep;
}

SweepResult threshold_sweep(const std::vector<std::vector<int>>& gold,
                            const std::vector<std::vector<double>>& probs, int relation_count) {
  if (gold.size() != probs.size())
    throw ContractError("threshold_sweep: " + std::to_string(gold.size()) + " gold sets vs " +
                        std::to_string(probs.size()) + " score rows");
  SweepResult best;
  bool have = false;
  for (int step = 1; step <= 9; ++step) {
    const double th = step / 10.0;
    std::vector<PredictionResult> pred(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) pred[i] = decode(probs[i], th);
    EvalReport rep = evaluate_sets(gold, pred, relation_count);
    if (!have || rep.f1 > best.report.f1) {
      best.threshold = th;
      best.report = std::move(rep);
      have = true;
    }
  }
  return best;
}

namespace {

// Continued fraction for the regularized incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
  const double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 3e-15) break;
  }
  return h;
}

double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log(1.0 - x);
  const double front = std::exp(ln);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_two_sided_p(double t, int df) {
  if (df < 1) throw ContractError("t-test needs df >= 1");
  const double d = static_cast<double>(df);
  return betai(d / 2.0, 0.5, d / (d + t * t));
}

double student_t_quantile_975(int df) {
  double lo = 0.0, hi = 1.0;
  while (student_t_two_sided_p(hi, df) > 0.05) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_two_sided_p(mid, df) > 0.05)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ContractError("paired_ttest: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + " folds");
  const int n = static_cast<int>(a.size());
  if (n < 2) throw ContractError("paired_ttest needs at least 2 folds");

  TTestResult r;
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    r.mean_diff += d[i];
  }
  r.mean_diff /= n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) ss += (d[i] - r.mean_diff) * (d[i] - r.mean_diff);
  const double sd = std::sqrt(ss / (n - 1));

  if (sd == 0.0) {
    r.degenerate = true;
    r.p = r.mean_diff == 0.0 ? 1.0 : 0.0;
    r.t = r.mean_diff == 0.0 ? 0.0 : (r.mean_diff > 0 ? HUGE_VAL : -HUGE_VAL);
    r.ci_lo = r.ci_hi = r.mean_diff;
    return r;
  }

  const double se = sd / std::sqrt(static_cast<double>(n));
  r.t = r.mean_diff / se;
  r.p = student_t_two_sided_p(r.t, n - 1);
  const double tc = student_t_quantile_975(n - 1);
  r.ci_lo = r.mean_diff - tc * se;
  r.ci_hi = r.mean_diff + tc * se;
  return r;
}

}  // namespace capsrel
