#pragma once

// Adam with bias correction. L2 regularization enters as an added gradient
// term lambda2 * theta on non-exempt parameters (embedding tables stay out).

#include <cmath>
#include <vector>

#include "capsrel/errors.hpp"
#include "capsrel/matrix.hpp"
#include "capsrel/model.hpp"

namespace capsrel {

template <class T>
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;
  long long t = 0;
  std::vector<Mat<T>> m, v;

  template <class M>
  explicit AdamState(M& model, double lr_ = 0.001, double l2_ = 0.0) : lr(lr_), l2(l2_) {
    auto es = model.entries();
    m.reserve(es.size());
    v.reserve(es.size());
    for (auto& e : es) {
      m.push_back(Mat<T>::zeros(e.mat->rows(), e.mat->cols()));
      v.push_back(Mat<T>::zeros(e.mat->rows(), e.mat->cols()));
    }
  }
};

// grads[i] may be empty (parameter untouched this step); it then contributes
// zero raw gradient but still sees L2 decay and moment updates.
template <class T>
void adam_step(ModelParams<T>& model, AdamState<T>& st, const std::vector<Mat<T>>& grads) {
  auto es = model.entries();
  if (grads.size() != es.size() || st.m.size() != es.size())
    throw ContractError("adam_step: got " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(es.size()) + " parameters");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t p = 0; p < es.size(); ++p) {
    Mat<T>& w = *es[p].mat;
    const Mat<T>& g = grads[p];
    if (!g.empty()) check_same_shape(g, w, ("adam_step gradient for " + es[p].name).c_str());
    Mat<T>& mp = st.m[p];
    Mat<T>& vp = st.v[p];
    const double decay = es[p].l2_exempt ? 0.0 : st.l2;
    for (std::size_t i = 0; i < w.size(); ++i) {
      double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      gi += decay * static_cast<double>(w[i]);
      double mi = st.beta1 * static_cast<double>(mp[i]) + (1.0 - st.beta1) * gi;
      double vi = st.beta2 * static_cast<double>(vp[i]) + (1.0 - st.beta2) * gi * gi;
      mp[i] = static_cast<T>(mi);
      vp[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

}  // namespace capsrel
