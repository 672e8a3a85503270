#pragma once

// Sliding-margin loss over capsule lengths with a learnable NA boundary B:
//
//   L = sum_j [ Y_j max(0, (B+gamma) - s_j)^2
//             + lambda (1-Y_j) max(0, s_j - (B-gamma))^2 ]
//
// The fixed-margin variant freezes B at 0.5 (no gradient). Decoding predicts
// every relation whose score strictly exceeds B; an empty set is NA.

#include <algorithm>
#include <vector>

#include "capsrel/model.hpp"
#include "capsrel/tape.hpp"

namespace capsrel {

struct PredictionResult {
  std::vector<double> scores;  // per non-NA relation
  std::vector<int> labels;     // decoded set, ascending
  bool na = false;
};

// scores: per-relation 1x1 nodes; boundary: 1x1 (param for sliding, constant
// for fixed). Returns the sentence loss as a 1x1 node.
template <class T>
typename Tape<T>::Var margin_loss(Tape<T>& tape, const std::vector<typename Tape<T>::Var>& scores,
                                  const std::vector<int>& gold, typename Tape<T>::Var boundary,
                                  double gamma, double lambda) {
  using Var = typename Tape<T>::Var;
  Var upper = tape.add_const(boundary, static_cast<T>(gamma));   // B + gamma
  Var lower = tape.add_const(boundary, static_cast<T>(-gamma));  // B - gamma
  Var total = tape.scalar(T(0));
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const bool present = std::binary_search(gold.begin(), gold.end(), static_cast<int>(j));
    Var term;
    if (present) {
      Var h = tape.relu(tape.sub(upper, scores[j]));
      term = tape.mul(h, h);
    } else {
      Var h = tape.relu(tape.sub(scores[j], lower));
      term = tape.scale(tape.mul(h, h), static_cast<T>(lambda));
    }
    total = tape.add(total, term);
  }
  return total;
}

template <class T>
typename Tape<T>::Var fixed_margin_loss(Tape<T>& tape, const std::vector<typename Tape<T>::Var>& scores,
                                        const std::vector<int>& gold, double gamma, double lambda) {
  return margin_loss(tape, scores, gold, tape.scalar(T(0.5)), gamma, lambda);
}

// Strict inequality: a score exactly at B is not predicted.
inline PredictionResult decode(const std::vector<double>& scores, double boundary) {
  PredictionResult out;
  out.scores = scores;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (scores[j] > boundary) out.labels.push_back(static_cast<int>(j));
  out.na = out.labels.empty();
  return out;
}

// Keep both hinge boundaries inside the achievable score range [0, 1).
inline double clamp_boundary(double b, double gamma) {
  const double lo = gamma + 0.01;
  const double hi = 1.0 - gamma - 0.01;
  if (b < lo) return lo;
  if (b > hi) return hi;
  return b;
}

}  // namespace capsrel
