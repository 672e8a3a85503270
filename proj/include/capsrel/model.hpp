#pragma once

// All learnable state for one relation extractor, plus the fixed metadata a
// checkpoint must carry to score new sentences (schema, vocabulary, shapes).

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "capsrel/data.hpp"
#include "capsrel/encoder.hpp"
#include "capsrel/errors.hpp"
#include "capsrel/matrix.hpp"
#include "capsrel/rng.hpp"

namespace capsrel {

enum class HeadKind { kCapsule, kMax, kAvg, kAtt };
enum class RoutingKind { kAttentive, kDynamic };
enum class LossKind { kSliding, kFixed };

std::string to_string(HeadKind k);
std::string to_string(RoutingKind k);
std::string to_string(LossKind k);
HeadKind head_kind_from(const std::string& s);
RoutingKind routing_kind_from(const std::string& s);
LossKind loss_kind_from(const std::string& s);

struct ModelDims {
  int word_dim = 50;    // p
  int pos_dim = 5;      // q
  int max_dist = 60;    // position clipping range
  int hidden = 256;     // s_h
  int d_u = 16;         // low-level capsule size
  int d_r = 16;         // high-level capsule size
  int iterations = 3;   // routing iterations z

  int input_dim() const { return word_dim + 2 * pos_dim; }
  int caps_per_token() const { return hidden / d_u; }
  void validate() const {
    if (word_dim < 1 || pos_dim < 1 || hidden < 1 || d_u < 1 || d_r < 1 || iterations < 1 || max_dist < 1)
      throw ConfigError("model dimensions must be positive");
    if (hidden % d_u != 0)
      throw ConfigError("hidden size " + std::to_string(hidden) + " is not a multiple of d_u " + std::to_string(d_u));
  }
};

struct MarginConfig {
  double gamma = 0.4;   // margin half-width
  double lambda = 0.5;  // absent-relation down-weight
  double b_init = 0.5;  // starting NA boundary

  void validate() const {
    // gamma > 0.49 empties the boundary clamp band [gamma+0.01, 1-gamma-0.01].
    if (gamma <= 0.0 || gamma > 0.49)
      throw ConfigError("gamma must lie in (0, 0.49], got " + std::to_string(gamma));
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0, got " + std::to_string(lambda));
  }
};

template <class T>
struct ModelParams {
  ModelDims dims;
  RelationSchema schema;
  std::vector<std::string> vocab;  // row order of word_emb; the extra last row is UNK
  std::unordered_map<std::string, int> word_row;
  int unk_row = 0;
  HeadKind head = HeadKind::kCapsule;
  RoutingKind routing = RoutingKind::kAttentive;
  LossKind loss = LossKind::kSliding;
  MarginConfig margin;

  Mat<T> word_emb;                  // (|rows|) x p
  Mat<T> pos_head_emb;              // (2*max_dist+1) x q
  Mat<T> pos_tail_emb;
  LstmDirParams<T> fwd, bwd;
  std::vector<Mat<T>> caps_W;       // J matrices, d_r x d_u
  Mat<T> boundary;                  // 1x1 learnable B
  Mat<T> att_v;                     // s_h x 1 (att head only)
  Mat<T> cls_W;                     // C x s_h, C = J + 1 incl. NA (baseline heads)
  Mat<T> cls_b;                     // C x 1

  int relation_count() const { return static_cast<int>(schema.size()); }
  int class_count() const { return relation_count() + 1; }  // + NA for baseline heads
  int na_class() const { return relation_count(); }

  int row_for(const std::string& word) const {
    auto it = word_row.find(word);
    return it == word_row.end() ? unk_row : it->second;
  }

  int pos_row(int clipped_dist) const { return clipped_dist + dims.max_dist; }

  struct Entry {
    std::string name;
    Mat<T>* mat;
    bool l2_exempt;  // embedding tables stay out of weight decay
  };

  // Stable parameter order; index in this vector is the param id used by the
  // tape and the optimizer.
  std::vector<Entry> entries() {
    std::vector<Entry> e;
    e.push_back({"emb.word", &word_emb, true});
    e.push_back({"emb.pos_head", &pos_head_emb, true});
    e.push_back({"emb.pos_tail", &pos_tail_emb, true});
    auto dir = [&e](const char* prefix, LstmDirParams<T>& d) {
      const std::string p(prefix);
      e.push_back({p + ".Wi", &d.Wi, false}); e.push_back({p + ".Ui", &d.Ui, false});
      e.push_back({p + ".Vi", &d.Vi, false}); e.push_back({p + ".bi", &d.bi, false});
      e.push_back({p + ".Wf", &d.Wf, false}); e.push_back({p + ".Uf", &d.Uf, false});
      e.push_back({p + ".Vf", &d.Vf, false}); e.push_back({p + ".bf", &d.bf, false});
      e.push_back({p + ".Wc", &d.Wc, false}); e.push_back({p + ".Uc", &d.Uc, false});
      e.push_back({p + ".Vc", &d.Vc, false}); e.push_back({p + ".bc", &d.bc, false});
      e.push_back({p + ".Wo", &d.Wo, false}); e.push_back({p + ".Uo", &d.Uo, false});
      e.push_back({p + ".Vo", &d.Vo, false}); e.push_back({p + ".bo", &d.bo, false});
    };
    dir("lstm.fwd", fwd);
    dir("lstm.bwd", bwd);
    if (head == HeadKind::kCapsule) {
      for (std::size_t j = 0; j < caps_W.size(); ++j)
        e.push_back({"caps.W." + std::to_string(j), &caps_W[j], false});
      e.push_back({"objective.B", &boundary, false});
    } else {
      if (head == HeadKind::kAtt) e.push_back({"head.att.v", &att_v, false});
      e.push_back({"head.cls.W", &cls_W, false});
      e.push_back({"head.cls.b", &cls_b, false});
    }
    return e;
  }

  bool all_finite() {
    for (const auto& en : entries())
      if (!en.mat->all_finite()) return false;
    return true;
  }
};

// Fresh model. The embedding table rows are copied (cast to T); vocabulary
// lookups that miss fall back to the table's UNK row.
template <class T>
ModelParams<T> init_model(const ModelDims& dims, const RelationSchema& schema,
                          const EmbeddingTable& table, const std::vector<std::string>& vocab,
                          HeadKind head, RoutingKind routing, LossKind loss,
                          const MarginConfig& margin, Rng& rng) {
  dims.validate();
  margin.validate();
  if (table.dim != dims.word_dim)
    throw ConfigError("embedding dim " + std::to_string(table.dim) + " != word_dim " +
                      std::to_string(dims.word_dim));
  ModelParams<T> m;
  m.dims = dims;
  m.schema = schema;
  m.head = head;
  m.routing = routing;
  m.loss = loss;
  m.margin = margin;

  m.vocab = vocab;
  m.unk_row = table.unk_row;
  m.word_emb = Mat<T>(table.vectors.rows(), table.vectors.cols());
  for (std::size_t i = 0; i < table.vectors.size(); ++i) m.word_emb[i] = static_cast<T>(table.vectors[i]);
  for (const auto& w : vocab) m.word_row[w] = table.lookup(w);

  const int pos_rows = 2 * dims.max_dist + 1;
  m.pos_head_emb = Mat<T>(pos_rows, dims.pos_dim);
  m.pos_tail_emb = Mat<T>(pos_rows, dims.pos_dim);
  rng.fill_uniform(m.pos_head_emb, -0.25, 0.25);
  rng.fill_uniform(m.pos_tail_emb, -0.25, 0.25);

  m.fwd = LstmDirParams<T>::init(dims.input_dim(), dims.hidden, rng);
  m.bwd = LstmDirParams<T>::init(dims.input_dim(), dims.hidden, rng);

  const int J = m.relation_count();
  if (head == HeadKind::kCapsule) {
    const double r = 1.0 / std::sqrt(static_cast<double>(dims.d_u));
    m.caps_W.resize(J);
    for (int j = 0; j < J; ++j) {
      m.caps_W[j] = Mat<T>(dims.d_r, dims.d_u);
      rng.fill_uniform(m.caps_W[j], -r, r);
    }
    m.boundary = Mat<T>(1, 1, static_cast<T>(margin.b_init));
  } else {
    const double r = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
    if (head == HeadKind::kAtt) {
      m.att_v = Mat<T>(dims.hidden, 1);
      rng.fill_uniform(m.att_v, -r, r);
    }
    m.cls_W = Mat<T>(m.class_count(), dims.hidden);
    rng.fill_uniform(m.cls_W, -r, r);
    m.cls_b = Mat<T>(m.class_count(), 1, T(0));
  }
  return m;
}

}  // namespace capsrel
