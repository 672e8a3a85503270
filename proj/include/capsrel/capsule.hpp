#pragma once

// Feature clustering: slice each hidden state into k = s_h / d_u low-level
// capsules, squash them, and route into one high-level capsule per relation.
//
// Routing loop, run z times over logits b (all zero at start):
//   w_i  = softmax(b_i) across relations
//   r_j  = g(sum_i w_ij * alpha_i * W_j u_i)
//   b_ij = b_ij + (W_j u_i) . r_j
// The logit update uses the raw vote agreement; alpha enters only the r
// computation. Attentive routing takes alpha_i = sigmoid(h_e . h_t(i)); plain
// dynamic routing is the same loop with alpha = 1. Gradients flow through the
// whole unrolled loop, b updates included.

#include <vector>

#include "capsrel/errors.hpp"
#include "capsrel/tape.hpp"

namespace capsrel {

template <class T>
struct LowCapsuleVars {
  using Var = typename Tape<T>::Var;
  std::vector<Var> caps;        // each d_u x 1, squashed
  std::vector<int> source_tok;  // capsule index -> token index
};

template <class T>
struct RoutingVars {
  using Var = typename Tape<T>::Var;
  std::vector<Var> r;      // high-level capsules, d_r x 1
  std::vector<Var> score;  // |r_j| as 1x1 nodes
  Var couplings;           // w from the final iteration, N x J
  Var logits;              // b after all updates, N x J
  std::vector<Var> alpha;  // per low-level capsule, 1x1
  int iterations = 0;
};

// Slice every hidden state into contiguous d_u blocks and squash each block.
template <class T>
LowCapsuleVars<T> split_capsules(Tape<T>& tape, const std::vector<typename Tape<T>::Var>& hidden, int d_u) {
  const int s_h = tape.val(hidden.at(0)).rows();
  if (s_h % d_u != 0)
    throw ConfigError("hidden size " + std::to_string(s_h) + " not divisible by capsule size " + std::to_string(d_u));
  const int k = s_h / d_u;
  LowCapsuleVars<T> out;
  out.caps.reserve(hidden.size() * k);
  out.source_tok.reserve(hidden.size() * k);
  for (int t = 0; t < static_cast<int>(hidden.size()); ++t) {
    for (int b = 0; b < k; ++b) {
      out.caps.push_back(tape.squash(tape.slice_rows(hidden[t], b * d_u, d_u)));
      out.source_tok.push_back(t);
    }
  }
  return out;
}

// alpha_i = sigmoid(h_e . h_t(i)); the k capsules of one token share its value.
template <class T>
std::vector<typename Tape<T>::Var> attention_weights(Tape<T>& tape,
                                                     const std::vector<typename Tape<T>::Var>& hidden,
                                                     typename Tape<T>::Var h_e,
                                                     const std::vector<int>& source_tok) {
  using Var = typename Tape<T>::Var;
  std::vector<Var> per_token(hidden.size());
  for (std::size_t t = 0; t < hidden.size(); ++t) per_token[t] = tape.sigmoid(tape.dot(h_e, hidden[t]));
  std::vector<Var> out(source_tok.size());
  for (std::size_t i = 0; i < source_tok.size(); ++i) out[i] = per_token[source_tok[i]];
  return out;
}

template <class T>
RoutingVars<T> route(Tape<T>& tape, const LowCapsuleVars<T>& low,
                     const std::vector<typename Tape<T>::Var>& caps_W,
                     const std::vector<typename Tape<T>::Var>& alpha, int iterations) {
  using Var = typename Tape<T>::Var;
  if (iterations < 1) throw ConfigError("routing needs iterations >= 1");
  const int N = static_cast<int>(low.caps.size());
  const int J = static_cast<int>(caps_W.size());
  if (static_cast<int>(alpha.size()) != N)
    throw ShapeError("route: " + std::to_string(alpha.size()) + " attention weights for " + std::to_string(N) + " capsules");

  // U = [u_1 .. u_N] as d_u x N, votes_j = W_j U as d_r x N.
  Var U = low.caps[0];
  for (int i = 1; i < N; ++i) U = tape.concat_cols(U, low.caps[i]);
  std::vector<Var> votes(J);
  for (int j = 0; j < J; ++j) votes[j] = tape.matmul(caps_W[j], U);

  Var alpha_col = alpha[0];
  for (int i = 1; i < N; ++i) alpha_col = tape.concat_rows(alpha_col, alpha[i]);

  RoutingVars<T> out;
  out.alpha = alpha;
  out.iterations = iterations;
  Var b = tape.constant(Mat<T>::zeros(N, J));
  Var w{};
  std::vector<Var> r(J);
  for (int it = 0; it < iterations; ++it) {
    w = tape.softmax_rows(b);
    for (int j = 0; j < J; ++j) {
      Var wa = tape.mul(tape.slice_cols(w, j, 1), alpha_col);
      r[j] = tape.squash(tape.matmul(votes[j], wa));
    }
    Var agree = tape.matmul(tape.transpose(votes[0]), r[0]);
    for (int j = 1; j < J; ++j) agree = tape.concat_cols(agree, tape.matmul(tape.transpose(votes[j]), r[j]));
    b = tape.add(b, agree);
  }
  out.r = r;
  out.couplings = w;
  out.logits = b;
  out.score.resize(J);
  for (int j = 0; j < J; ++j) out.score[j] = tape.vec_norm(r[j]);
  return out;
}

// Original routing by agreement: the same loop with every alpha pinned to 1.
template <class T>
RoutingVars<T> dynamic_route(Tape<T>& tape, const LowCapsuleVars<T>& low,
                             const std::vector<typename Tape<T>::Var>& caps_W, int iterations) {
  using Var = typename Tape<T>::Var;
  std::vector<Var> ones(low.caps.size());
  Var one = tape.scalar(T(1));
  for (auto& v : ones) v = one;
  return route(tape, low, caps_W, ones, iterations);
}

// Plain-number view of a routing state for diagnostics and decoding.
struct RoutingTrace {
  std::vector<double> alpha_per_token;
  std::vector<std::vector<double>> couplings;  // N rows of J
  std::vector<double> scores;                  // |r_j|
  int iterations = 0;
};

template <class T>
RoutingTrace extract_trace(const Tape<T>& tape, const RoutingVars<T>& rv, const std::vector<int>& source_tok,
                           int n_tokens) {
  RoutingTrace tr;
  tr.iterations = rv.iterations;
  tr.alpha_per_token.assign(n_tokens, 1.0);
  for (std::size_t i = 0; i < rv.alpha.size(); ++i)
    tr.alpha_per_token[source_tok[i]] = static_cast<double>(tape.scalar_val(rv.alpha[i]));
  const Mat<T>& w = tape.val(rv.couplings);
  tr.couplings.assign(w.rows(), std::vector<double>(w.cols()));
  for (int i = 0; i < w.rows(); ++i)
    for (int j = 0; j < w.cols(); ++j) tr.couplings[i][j] = static_cast<double>(w(i, j));
  tr.scores.resize(rv.score.size());
  for (std::size_t j = 0; j < rv.score.size(); ++j) tr.scores[j] = static_cast<double>(tape.scalar_val(rv.score[j]));
  return tr;
}

}  // namespace capsrel
