#pragma once

// Per-sentence forward graphs. One Bindings object per tape keeps each
// parameter bound at most once so gradients accumulate on a single leaf.

#include <optional>
#include <vector>

#include "capsrel/capsule.hpp"
#include "capsrel/encoder.hpp"
#include "capsrel/heads.hpp"
#include "capsrel/model.hpp"
#include "capsrel/objective.hpp"
#include "capsrel/tape.hpp"

namespace capsrel {

template <class T>
class Bindings {
 public:
  using Var = typename Tape<T>::Var;

  Bindings(Tape<T>& tape, ModelParams<T>& model) : tape_(tape) {
    auto es = model.entries();
    mats_.reserve(es.size());
    for (auto& e : es) mats_.push_back(e.mat);
    vars_.assign(es.size(), Var{});
  }

  Var of(int param_id) {
    Var& v = vars_[param_id];
    if (!v.valid()) v = tape_.param(param_id, mats_[param_id]);
    return v;
  }

  std::size_t count() const { return vars_.size(); }

 private:
  Tape<T>& tape_;
  std::vector<const Mat<T>*> mats_;
  std::vector<Var> vars_;
};

// Parameter ids in ModelParams::entries() order. The fixed prefix is shared
// by every head; capsule/baseline ids follow it.
struct ParamIds {
  static constexpr int kWordEmb = 0;
  static constexpr int kPosHead = 1;
  static constexpr int kPosTail = 2;
  static constexpr int kLstmFwd = 3;   // 16 entries per direction
  static constexpr int kLstmBwd = 19;
  static constexpr int kAfterLstm = 35;
};

template <class T>
LstmDirVars<T> bind_lstm(Bindings<T>& b, int base) {
  LstmDirVars<T> v;
  v.Wi = b.of(base + 0);  v.Ui = b.of(base + 1);  v.Vi = b.of(base + 2);  v.bi = b.of(base + 3);
  v.Wf = b.of(base + 4);  v.Uf = b.of(base + 5);  v.Vf = b.of(base + 6);  v.bf = b.of(base + 7);
  v.Wc = b.of(base + 8);  v.Uc = b.of(base + 9);  v.Vc = b.of(base + 10); v.bc = b.of(base + 11);
  v.Wo = b.of(base + 12); v.Uo = b.of(base + 13); v.Vo = b.of(base + 14); v.bo = b.of(base + 15);
  return v;
}

template <class T>
struct EncodedSentence {
  using Var = typename Tape<T>::Var;
  std::vector<Var> hidden;  // per token, s_h x 1
  Var entity_feature;       // h_e = h_head + h_tail
};

// x_t = word_emb(token) || pos_head(dist) || pos_tail(dist), then the summed
// bidirectional LSTM. Dropout (train only) masks the h_t outputs; the mask is
// drawn per token from `rng`.
template <class T>
EncodedSentence<T> encode_sentence(Tape<T>& tape, Bindings<T>& bind, const ModelParams<T>& model,
                                   const SentenceExample& ex, double dropout = 0.0, Rng* rng = nullptr) {
  using Var = typename Tape<T>::Var;
  const auto pos = position_ids(ex, model.dims.max_dist);
  Var wtab = bind.of(ParamIds::kWordEmb);
  Var ptab_h = bind.of(ParamIds::kPosHead);
  Var ptab_t = bind.of(ParamIds::kPosTail);
  std::vector<Var> xs(ex.tokens.size());
  for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
    Var w = tape.row_as_col(wtab, model.row_for(ex.tokens[t]));
    Var ph = tape.row_as_col(ptab_h, model.pos_row(pos[t].to_head));
    Var pt = tape.row_as_col(ptab_t, model.pos_row(pos[t].to_tail));
    xs[t] = tape.concat_rows(tape.concat_rows(w, ph), pt);
  }

  auto fwd = lstm_forward(tape, bind_lstm(bind, ParamIds::kLstmFwd), xs, false);
  auto bwd = lstm_forward(tape, bind_lstm(bind, ParamIds::kLstmBwd), xs, true);
  EncodedSentence<T> out;
  out.hidden.resize(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) out.hidden[t] = tape.add(fwd[t], bwd[t]);

  if (dropout > 0.0 && rng) {
    const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout));
    for (auto& h : out.hidden) {
      Mat<T> mask(model.dims.hidden, 1);
      for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = rng->uniform() < dropout ? T(0) : keep_scale;
      h = tape.mul(h, tape.constant(std::move(mask)));
    }
  }

  out.entity_feature = tape.add(out.hidden[ex.head], out.hidden[ex.tail]);
  return out;
}

template <class T>
struct CapsuleForward {
  RoutingVars<T> routing;
  std::vector<int> source_tok;
};

template <class T>
CapsuleForward<T> capsule_forward(Tape<T>& tape, Bindings<T>& bind, const ModelParams<T>& model,
                                  const EncodedSentence<T>& enc) {
  using Var = typename Tape<T>::Var;
  auto low = split_capsules(tape, enc.hidden, model.dims.d_u);
  std::vector<Var> Wv(model.relation_count());
  for (int j = 0; j < model.relation_count(); ++j) Wv[j] = bind.of(ParamIds::kAfterLstm + j);
  CapsuleForward<T> out;
  if (model.routing == RoutingKind::kAttentive) {
    auto alpha = attention_weights(tape, enc.hidden, enc.entity_feature, low.source_tok);
    out.routing = route(tape, low, Wv, alpha, model.dims.iterations);
  } else {
    out.routing = dynamic_route(tape, low, Wv, model.dims.iterations);
  }
  out.source_tok = low.source_tok;
  return out;
}

template <class T>
typename Tape<T>::Var capsule_boundary_var(Tape<T>& tape, Bindings<T>& bind, const ModelParams<T>& model) {
  if (model.loss == LossKind::kFixed) return tape.scalar(T(0.5));
  return bind.of(ParamIds::kAfterLstm + model.relation_count());
}

// Sentence training loss for whichever head the model carries.
template <class T>
typename Tape<T>::Var sentence_loss(Tape<T>& tape, Bindings<T>& bind, ModelParams<T>& model,
                                    const SentenceExample& ex, double dropout, Rng* rng) {
  using Var = typename Tape<T>::Var;
  auto enc = encode_sentence(tape, bind, model, ex, dropout, rng);
  if (model.head == HeadKind::kCapsule) {
    auto cf = capsule_forward(tape, bind, model, enc);
    Var b = capsule_boundary_var(tape, bind, model);
    return margin_loss(tape, cf.routing.score, ex.labels, b, model.margin.gamma, model.margin.lambda);
  }
  HeadVars<T> hv;
  if (model.head == HeadKind::kAtt) hv.att_v = bind.of(ParamIds::kAfterLstm);
  const int cls_base = ParamIds::kAfterLstm + (model.head == HeadKind::kAtt ? 1 : 0);
  hv.cls_W = bind.of(cls_base);
  hv.cls_b = bind.of(cls_base + 1);
  Var probs = classify(tape, aggregate(tape, model.head, enc.hidden, hv), hv);
  // Single-label cross-entropy; a multi-labeled sentence trains on its
  // lowest-index gold label, an unlabeled one on the NA class.
  const int target = ex.labels.empty() ? model.na_class() : ex.labels.front();
  return tape.scale(tape.log(tape.slice_rows(probs, target, 1)), T(-1));
}

struct ScoredSentence {
  PredictionResult pred;
  std::optional<RoutingTrace> trace;
};

// Inference scores on a throwaway tape. Capsule models score by capsule
// length and decode against B; baseline heads report non-NA class
// probabilities and decode by argmax (NA class wins as NA).
template <class T>
ScoredSentence score_sentence(ModelParams<T>& model, const SentenceExample& ex, bool want_trace = false) {
  using Var = typename Tape<T>::Var;
  Tape<T> tape;
  Bindings<T> bind(tape, model);
  auto enc = encode_sentence(tape, bind, model, ex);
  ScoredSentence out;
  if (model.head == HeadKind::kCapsule) {
    auto cf = capsule_forward(tape, bind, model, enc);
    std::vector<double> scores(model.relation_count());
    for (int j = 0; j < model.relation_count(); ++j)
      scores[j] = static_cast<double>(tape.scalar_val(cf.routing.score[j]));
    const double b = static_cast<double>(model.boundary[0]);
    out.pred = decode(scores, b);
    if (want_trace)
      out.trace = extract_trace(tape, cf.routing, cf.source_tok, static_cast<int>(ex.tokens.size()));
    return out;
  }
  HeadVars<T> hv;
  if (model.head == HeadKind::kAtt) hv.att_v = bind.of(ParamIds::kAfterLstm);
  const int cls_base = ParamIds::kAfterLstm + (model.head == HeadKind::kAtt ? 1 : 0);
  hv.cls_W = bind.of(cls_base);
  hv.cls_b = bind.of(cls_base + 1);
  Var probs = classify(tape, aggregate(tape, model.head, enc.hidden, hv), hv);
  const Mat<T>& p = tape.val(probs);
  out.pred.scores.resize(model.relation_count());
  int best = 0;
  for (int c = 1; c < model.class_count(); ++c)
    if (p(c, 0) > p(best, 0)) best = c;
  for (int j = 0; j < model.relation_count(); ++j) out.pred.scores[j] = static_cast<double>(p(j, 0));
  if (best != model.na_class()) out.pred.labels.push_back(best);
  out.pred.na = out.pred.labels.empty();
  return out;
}

// Threshold decoding for baseline heads: every non-NA class whose probability
// strictly exceeds the threshold, NA when none does.
inline PredictionResult decode_threshold(const std::vector<double>& probs, double threshold) {
  return decode(probs, threshold);
}

}  // namespace capsrel
