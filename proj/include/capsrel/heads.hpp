#pragma once

// Baseline feature-clustering heads over the shared encoder: elementwise max,
// linear average, and word-level attention (softmax over v . tanh(h_t)),
// each feeding a linear + softmax classifier over J + 1 classes (NA has its
// own class here, unlike the capsule head).

#include <vector>

#include "capsrel/model.hpp"
#include "capsrel/tape.hpp"

namespace capsrel {

template <class T>
struct HeadVars {
  using Var = typename Tape<T>::Var;
  Var att_v, cls_W, cls_b;
};

// Sentence vector from per-token hidden states. For the attention head the
// token weights are written to *att_weights_out when requested.
template <class T>
typename Tape<T>::Var aggregate(Tape<T>& tape, HeadKind kind, const std::vector<typename Tape<T>::Var>& hidden,
                                const HeadVars<T>& hv, typename Tape<T>::Var* att_weights_out = nullptr) {
  using Var = typename Tape<T>::Var;
  if (hidden.empty()) throw ShapeError("aggregate over an empty hidden sequence");
  switch (kind) {
    case HeadKind::kMax: {
      Var m = hidden[0];
      for (std::size_t t = 1; t < hidden.size(); ++t) m = tape.max2(m, hidden[t]);
      return m;
    }
    case HeadKind::kAvg: {
      Var s = hidden[0];
      for (std::size_t t = 1; t < hidden.size(); ++t) s = tape.add(s, hidden[t]);
      return tape.scale(s, T(1) / static_cast<T>(hidden.size()));
    }
    case HeadKind::kAtt: {
      Var e = tape.dot(hv.att_v, tape.tanh(hidden[0]));
      for (std::size_t t = 1; t < hidden.size(); ++t)
        e = tape.concat_rows(e, tape.dot(hv.att_v, tape.tanh(hidden[t])));
      Var a = tape.softmax_vec(e);
      if (att_weights_out) *att_weights_out = a;
      Var H = hidden[0];
      for (std::size_t t = 1; t < hidden.size(); ++t) H = tape.concat_cols(H, hidden[t]);
      return tape.matmul(H, a);
    }
    case HeadKind::kCapsule:
      break;
  }
  throw ContractError("aggregate called with the capsule head");
}

// softmax(W v + b) over C classes.
template <class T>
typename Tape<T>::Var classify(Tape<T>& tape, typename Tape<T>::Var sentence_vec, const HeadVars<T>& hv) {
  return tape.softmax_vec(tape.add(tape.matmul(hv.cls_W, sentence_vec), hv.cls_b));
}

}  // namespace capsrel
