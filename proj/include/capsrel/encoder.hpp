#pragma once

// Sentence encoder: word + position embeddings feeding a bidirectional LSTM
// whose directions are summed element-wise. The gate equations follow the
// peephole form with full matrices V_* and the cell peephole inside the tanh:
//
//   i_t = sigmoid(W_i x_t + U_i h_{t-1} + V_i c_{t-1} + b_i)
//   f_t = sigmoid(W_f x_t + U_f h_{t-1} + V_f c_{t-1} + b_f)
//   c_t = i_t tanh(W_c x_t + U_c h_{t-1} + V_c c_{t-1} + b_c) + f_t c_{t-1}
//   o_t = sigmoid(W_o x_t + U_o h_{t-1} + V_o c_t + b_o)
//   h_t = o_t tanh(c_t)
//
// This is deliberately not the textbook LSTM (which keeps the peephole out of
// the tanh); the cell recurrence is transcribed as printed above.

#include <vector>

#include "capsrel/data.hpp"
#include "capsrel/rng.hpp"
#include "capsrel/tape.hpp"

namespace capsrel {

struct PosPair {
  int to_head = 0;
  int to_tail = 0;
};

// Signed distance from token t to each entity, t - entity_index, so that in
// "Arthur-Lee was born in Memphis" the token "born" gets (2, -2). Clipped to
// [-max_dist, +max_dist].
inline std::vector<PosPair> position_ids(const SentenceExample& ex, int max_dist) {
  std::vector<PosPair> out(ex.tokens.size());
  auto clip = [max_dist](int d) { return d < -max_dist ? -max_dist : (d > max_dist ? max_dist : d); };
  for (int t = 0; t < static_cast<int>(ex.tokens.size()); ++t) {
    out[t].to_head = clip(t - ex.head);
    out[t].to_tail = clip(t - ex.tail);
  }
  return out;
}

template <class T>
struct LstmDirParams {
  Mat<T> Wi, Ui, Vi, bi;
  Mat<T> Wf, Uf, Vf, bf;
  Mat<T> Wc, Uc, Vc, bc;
  Mat<T> Wo, Uo, Vo, bo;

  // Uniform [-1/sqrt(s_h), +1/sqrt(s_h)], zero biases, forget bias +1.
  static LstmDirParams init(int input_dim, int hidden, Rng& rng) {
    LstmDirParams p;
    const double r = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto mk = [&](Mat<T>& m, int rows, int cols) {
      m = Mat<T>(rows, cols);
      rng.fill_uniform(m, -r, r);
    };
    mk(p.Wi, hidden, input_dim); mk(p.Ui, hidden, hidden); mk(p.Vi, hidden, hidden);
    mk(p.Wf, hidden, input_dim); mk(p.Uf, hidden, hidden); mk(p.Vf, hidden, hidden);
    mk(p.Wc, hidden, input_dim); mk(p.Uc, hidden, hidden); mk(p.Vc, hidden, hidden);
    mk(p.Wo, hidden, input_dim); mk(p.Uo, hidden, hidden); mk(p.Vo, hidden, hidden);
    p.bi = Mat<T>(hidden, 1, T(0));
    p.bf = Mat<T>(hidden, 1, T(1));
    p.bc = Mat<T>(hidden, 1, T(0));
    p.bo = Mat<T>(hidden, 1, T(0));
    return p;
  }
};

// Tape-bound handles for one direction's parameters.
template <class T>
struct LstmDirVars {
  using Var = typename Tape<T>::Var;
  Var Wi, Ui, Vi, bi;
  Var Wf, Uf, Vf, bf;
  Var Wc, Uc, Vc, bc;
  Var Wo, Uo, Vo, bo;
};

// One direction over `inputs` (column vectors), h_0 = c_0 = 0.
template <class T>
std::vector<typename Tape<T>::Var> lstm_forward(Tape<T>& tape, const LstmDirVars<T>& p,
                                                const std::vector<typename Tape<T>::Var>& inputs,
                                                bool reversed) {
  using Var = typename Tape<T>::Var;
  const int n = static_cast<int>(inputs.size());
  const int hidden = tape.val(p.bi).rows();
  std::vector<Var> hs(n);
  Var h = tape.constant(Mat<T>::zeros(hidden, 1));
  Var c = tape.constant(Mat<T>::zeros(hidden, 1));
  for (int step = 0; step < n; ++step) {
    const int t = reversed ? n - 1 - step : step;
    Var x = inputs[t];
    auto gate_pre = [&](Var W, Var U, Var V, Var b, Var cv) {
      return tape.add(tape.add(tape.matmul(W, x), tape.matmul(U, h)), tape.add(tape.matmul(V, cv), b));
    };
    Var i_t = tape.sigmoid(gate_pre(p.Wi, p.Ui, p.Vi, p.bi, c));
    Var f_t = tape.sigmoid(gate_pre(p.Wf, p.Uf, p.Vf, p.bf, c));
    Var c_t = tape.add(tape.mul(i_t, tape.tanh(gate_pre(p.Wc, p.Uc, p.Vc, p.bc, c))), tape.mul(f_t, c));
    Var o_t = tape.sigmoid(gate_pre(p.Wo, p.Uo, p.Vo, p.bo, c_t));
    Var h_t = tape.mul(o_t, tape.tanh(c_t));
    h = h_t;
    c = c_t;
    hs[t] = h_t;
  }
  return hs;
}

}  // namespace capsrel
