#pragma once

// Reverse-mode differentiation tape at matrix granularity. A tape lives for
// one training example or batch: forward calls append nodes, backward() runs
// the adjoint sweep once in reverse creation order (creation order is already
// topological, so each node is visited exactly once).
//
// Parameter leaves reference external matrices (read-shared during the tape's
// lifetime, single-writer between tapes); their accumulated adjoints are
// exported by param id after backward().

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "capsrel/errors.hpp"
#include "capsrel/matrix.hpp"

namespace capsrel {

// Inputs beyond +-30 saturate the sigmoid at ~1e-13 from the rail; clamping
// there avoids exp overflow without moving any value at test tolerances.
inline double sigmoid_clamped(double x) {
  if (x > 30.0) x = 30.0;
  if (x < -30.0) x = -30.0;
  return 1.0 / (1.0 + std::exp(-x));
}

constexpr double kSquashEps = 1e-12;

template <class T>
class Tape {
 public:
  struct Var {
    std::int32_t i = -1;
    bool valid() const { return i >= 0; }
  };

  enum class Op : std::uint8_t {
    kParam,
    kConst,
    kAdd,
    kSub,
    kMul,
    kMatmul,
    kScale,
    kAddC,
    kSigmoid,
    kTanh,
    kRelu,
    kLog,
    kSoftmaxVec,
    kSoftmaxRows,
    kSquash,
    kVecNorm,
    kDot,
    kSum,
    kMax2,
    kTranspose,
    kSliceRows,
    kRowAsCol,
    kConcatRows,
    kConcatCols,
    kSliceCols,
  };

  // ---- leaves ----

  Var param(int param_id, const Mat<T>* value) {
    Node n;
    n.op = Op::kParam;
    n.pref = value;
    n.param_id = param_id;
    return push(std::move(n));
  }

  Var constant(Mat<T> value) {
    Node n;
    n.op = Op::kConst;
    n.value = std::move(value);
    return push(std::move(n));
  }

  Var scalar(T v) { return constant(Mat<T>(1, 1, v)); }

  // ---- elementwise / linear algebra ----

  Var add(Var a, Var b) {
    check_same_shape(val(a), val(b), "tape add");
    Node n = binary(Op::kAdd, a, b);
    n.value = capsrel::add(val(a), val(b));
    return push(std::move(n));
  }

  Var sub(Var a, Var b) {
    check_same_shape(val(a), val(b), "tape sub");
    Node n = binary(Op::kSub, a, b);
    n.value = capsrel::sub(val(a), val(b));
    return push(std::move(n));
  }

  Var mul(Var a, Var b) {
    check_same_shape(val(a), val(b), "tape mul");
    Node n = binary(Op::kMul, a, b);
    n.value = hadamard(val(a), val(b));
    return push(std::move(n));
  }

  Var matmul(Var a, Var b) {
    Node n = binary(Op::kMatmul, a, b);
    n.value = capsrel::matmul(val(a), val(b));
    return push(std::move(n));
  }

  Var scale(Var a, T c) {
    Node n = unary(Op::kScale, a);
    n.s = c;
    n.value = capsrel::scale(val(a), c);
    return push(std::move(n));
  }

  Var add_const(Var a, T c) {
    Node n = unary(Op::kAddC, a);
    n.s = c;
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += c;
    return push(std::move(n));
  }

  Var sigmoid(Var a) {
    Node n = unary(Op::kSigmoid, a);
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.size(); ++i)
      n.value[i] = static_cast<T>(sigmoid_clamped(static_cast<double>(n.value[i])));
    return push(std::move(n));
  }

  Var tanh(Var a) {
    Node n = unary(Op::kTanh, a);
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::tanh(n.value[i]);
    return push(std::move(n));
  }

  Var relu(Var a) {
    Node n = unary(Op::kRelu, a);
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.size(); ++i)
      if (n.value[i] < T(0)) n.value[i] = T(0);
    return push(std::move(n));
  }

  Var log(Var a) {
    Node n = unary(Op::kLog, a);
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = std::log(n.value[i]);
    return push(std::move(n));
  }

  // softmax over the entries of a column vector, max-subtracted
  Var softmax_vec(Var a) {
    const Mat<T>& x = val(a);
    if (x.cols() != 1 || x.rows() < 1) throw ShapeError("softmax_vec wants a non-empty column vector, got " + x.shape_str());
    Node n = unary(Op::kSoftmaxVec, a);
    n.value = x;
    softmax_span(n.value.data(), x.rows());
    return push(std::move(n));
  }

  // softmax across the columns of every row independently
  Var softmax_rows(Var a) {
    const Mat<T>& x = val(a);
    if (x.cols() < 1) throw ShapeError("softmax_rows on empty " + x.shape_str());
    Node n = unary(Op::kSoftmaxRows, a);
    n.value = x;
    for (int r = 0; r < x.rows(); ++r) softmax_span(n.value.data() + static_cast<std::size_t>(r) * x.cols(), x.cols());
    return push(std::move(n));
  }

  // g(v) = (|v|^2 / (1 + |v|^2)) * v / |v|, with g(0) = 0 via the eps guard
  Var squash(Var a) {
    const Mat<T>& v = val(a);
    if (v.cols() != 1) throw ShapeError("squash wants a column vector, got " + v.shape_str());
    Node n = unary(Op::kSquash, a);
    T s = dot_flat(v, v);
    T nn = std::sqrt(s);
    if (static_cast<double>(nn) < kSquashEps) {
      n.value = Mat<T>::zeros(v.rows(), 1);
    } else {
      n.value = capsrel::scale(v, nn / (T(1) + s));
    }
    return push(std::move(n));
  }

  // |v| as a 1x1 scalar node
  Var vec_norm(Var a) {
    Node n = unary(Op::kVecNorm, a);
    n.value = Mat<T>(1, 1, norm_flat(val(a)));
    return push(std::move(n));
  }

  Var dot(Var a, Var b) {
    check_same_shape(val(a), val(b), "tape dot");
    Node n = binary(Op::kDot, a, b);
    n.value = Mat<T>(1, 1, dot_flat(val(a), val(b)));
    return push(std::move(n));
  }

  Var sum(Var a) {
    Node n = unary(Op::kSum, a);
    T s = 0;
    for (std::size_t i = 0; i < val(a).size(); ++i) s += val(a)[i];
    n.value = Mat<T>(1, 1, s);
    return push(std::move(n));
  }

  // elementwise max; ties route the adjoint to the first argument
  Var max2(Var a, Var b) {
    check_same_shape(val(a), val(b), "tape max2");
    Node n = binary(Op::kMax2, a, b);
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.size(); ++i)
      if (val(b)[i] > n.value[i]) n.value[i] = val(b)[i];
    return push(std::move(n));
  }

  Var transpose(Var a) {
    Node n = unary(Op::kTranspose, a);
    n.value = transpose_of(val(a));
    return push(std::move(n));
  }

  Var slice_rows(Var a, int off, int count) {
    const Mat<T>& x = val(a);
    if (off < 0 || count < 1 || off + count > x.rows())
      throw ShapeError("slice_rows [" + std::to_string(off) + "," + std::to_string(off + count) + ") of " + x.shape_str());
    Node n = unary(Op::kSliceRows, a);
    n.i0 = off;
    n.i1 = count;
    n.value = Mat<T>(count, x.cols());
    for (int r = 0; r < count; ++r)
      for (int c = 0; c < x.cols(); ++c) n.value(r, c) = x(off + r, c);
    return push(std::move(n));
  }

  Var slice_cols(Var a, int off, int count) {
    const Mat<T>& x = val(a);
    if (off < 0 || count < 1 || off + count > x.cols())
      throw ShapeError("slice_cols [" + std::to_string(off) + "," + std::to_string(off + count) + ") of " + x.shape_str());
    Node n = unary(Op::kSliceCols, a);
    n.i0 = off;
    n.i1 = count;
    n.value = Mat<T>(x.rows(), count);
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < count; ++c) n.value(r, c) = x(r, off + c);
    return push(std::move(n));
  }

  // row r of a table, returned as a column vector (embedding lookup)
  Var row_as_col(Var table, int r) {
    const Mat<T>& x = val(table);
    if (r < 0 || r >= x.rows()) throw ShapeError("row " + std::to_string(r) + " of " + x.shape_str());
    Node n = unary(Op::kRowAsCol, table);
    n.i0 = r;
    n.value = Mat<T>(x.cols(), 1);
    for (int c = 0; c < x.cols(); ++c) n.value(c, 0) = x(r, c);
    return push(std::move(n));
  }

  Var concat_rows(Var a, Var b) {
    const Mat<T>& x = val(a);
    const Mat<T>& y = val(b);
    if (x.cols() != y.cols()) throw ShapeError("concat_rows: " + x.shape_str() + " over " + y.shape_str());
    Node n = binary(Op::kConcatRows, a, b);
    n.i0 = x.rows();
    n.value = Mat<T>(x.rows() + y.rows(), x.cols());
    for (int r = 0; r < x.rows(); ++r)
      for (int c = 0; c < x.cols(); ++c) n.value(r, c) = x(r, c);
    for (int r = 0; r < y.rows(); ++r)
      for (int c = 0; c < y.cols(); ++c) n.value(x.rows() + r, c) = y(r, c);
    return push(std::move(n));
  }

  Var concat_cols(Var a, Var b) {
    const Mat<T>& x = val(a);
    const Mat<T>& y = val(b);
    if (x.rows() != y.rows()) throw ShapeError("concat_cols: " + x.shape_str() + " beside " + y.shape_str());
    Node n = binary(Op::kConcatCols, a, b);
    n.i0 = x.cols();
    n.value = Mat<T>(x.rows(), x.cols() + y.cols());
    for (int r = 0; r < x.rows(); ++r) {
      for (int c = 0; c < x.cols(); ++c) n.value(r, c) = x(r, c);
      for (int c = 0; c < y.cols(); ++c) n.value(r, x.cols() + c) = y(r, c);
    }
    return push(std::move(n));
  }

  // ---- access ----

  const Mat<T>& val(Var v) const {
    const Node& n = nodes_[v.i];
    return n.op == Op::kParam ? *n.pref : n.value;
  }

  T scalar_val(Var v) const { return val(v)[0]; }

  const Mat<T>& grad(Var v) const { return nodes_[v.i].grad; }

  std::size_t node_count() const { return nodes_.size(); }

  // ---- adjoint sweep ----

  void backward(Var root) {
    const Mat<T>& rv = val(root);
    if (rv.rows() != 1 || rv.cols() != 1)
      throw ContractError("backward root must be a 1x1 scalar, got " + rv.shape_str());
    for (Node& n : nodes_) n.grad = Mat<T>();  // grads zero-initialized lazily below
    grad_of(root.i) [0] = T(1);
    for (std::int32_t i = static_cast<std::int32_t>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;  // unreachable from root
      step_back(n);
    }
  }

  // Adds each bound parameter's adjoint into acc[param_id]; allocates zero
  // matrices on first touch. Parameters never bound or unreachable stay as
  // the caller left them (exact zero contribution).
  void export_grads(std::vector<Mat<T>>& acc) const {
    for (const Node& n : nodes_) {
      if (n.op != Op::kParam || n.grad.empty()) continue;
      Mat<T>& slot = acc[n.param_id];
      if (slot.empty()) slot = Mat<T>::zeros(n.pref->rows(), n.pref->cols());
      for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += n.grad[i];
    }
  }

 private:
  struct Node {
    Op op;
    std::int32_t a = -1, b = -1;
    int i0 = 0, i1 = 0;  // aux: slice offsets, split points, row index
    T s = 0;             // aux scalar for kScale / kAddC
    Mat<T> value;
    const Mat<T>* pref = nullptr;  // kParam only
    int param_id = -1;
    Mat<T> grad;
  };

  Node unary(Op op, Var a) {
    Node n;
    n.op = op;
    n.a = a.i;
    return n;
  }

  Node binary(Op op, Var a, Var b) {
    Node n;
    n.op = op;
    n.a = a.i;
    n.b = b.i;
    return n;
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  static void softmax_span(T* x, int n) {
    T mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    T z = 0;
    for (int i = 0; i < n; ++i) {
      x[i] = std::exp(x[i] - mx);
      z += x[i];
    }
    for (int i = 0; i < n; ++i) x[i] /= z;
  }

  Mat<T>& grad_of(std::int32_t i) {
    Node& n = nodes_[i];
    if (n.grad.empty()) {
      const Mat<T>& v = n.op == Op::kParam ? *n.pref : n.value;
      n.grad = Mat<T>::zeros(v.rows(), v.cols());
    }
    return n.grad;
  }

  const Mat<T>& value_of(std::int32_t i) const {
    const Node& n = nodes_[i];
    return n.op == Op::kParam ? *n.pref : n.value;
  }

  void step_back(Node& n) {
    const Mat<T>& g = n.grad;
    switch (n.op) {
      case Op::kParam:
      case Op::kConst:
        break;
      case Op::kAdd: {
        axpy(n.a, g, T(1));
        axpy(n.b, g, T(1));
        break;
      }
      case Op::kSub: {
        axpy(n.a, g, T(1));
        axpy(n.b, g, T(-1));
        break;
      }
      case Op::kMul: {
        Mat<T>& ga = grad_of(n.a);
        const Mat<T>& bv = value_of(n.b);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
        Mat<T>& gb = grad_of(n.b);
        const Mat<T>& av = value_of(n.a);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
        break;
      }
      case Op::kMatmul: {
        const Mat<T>& av = value_of(n.a);
        const Mat<T>& bv = value_of(n.b);
        accum_matmul_nt(grad_of(n.a), g, bv);   // ga += g * b^T
        accum_matmul_tn(grad_of(n.b), av, g);   // gb += a^T * g
        break;
      }
      case Op::kScale: {
        axpy(n.a, g, n.s);
        break;
      }
      case Op::kAddC: {
        axpy(n.a, g, T(1));
        break;
      }
      case Op::kSigmoid: {
        Mat<T>& ga = grad_of(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) {
          T y = n.value[i];
          ga[i] += g[i] * y * (T(1) - y);
        }
        break;
      }
      case Op::kTanh: {
        Mat<T>& ga = grad_of(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) {
          T y = n.value[i];
          ga[i] += g[i] * (T(1) - y * y);
        }
        break;
      }
      case Op::kRelu: {
        Mat<T>& ga = grad_of(n.a);
        const Mat<T>& xv = value_of(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i)
          if (xv[i] > T(0)) ga[i] += g[i];
        break;
      }
      case Op::kLog: {
        Mat<T>& ga = grad_of(n.a);
        const Mat<T>& xv = value_of(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / xv[i];
        break;
      }
      case Op::kSoftmaxVec: {
        backprop_softmax_span(grad_of(n.a).data(), n.value.data(), g.data(), n.value.rows());
        break;
      }
      case Op::kSoftmaxRows: {
        const int c = n.value.cols();
        Mat<T>& ga = grad_of(n.a);
        for (int r = 0; r < n.value.rows(); ++r) {
          const std::size_t o = static_cast<std::size_t>(r) * c;
          backprop_softmax_span(ga.data() + o, n.value.data() + o, g.data() + o, c);
        }
        break;
      }
      case Op::kSquash: {
        const Mat<T>& v = value_of(n.a);
        T s = dot_flat(v, v);
        T nn = std::sqrt(s);
        if (static_cast<double>(nn) < kSquashEps) break;  // g(0) stays flat
        T c = nn / (T(1) + s);
        T cp_over_n = (T(1) - s) / ((T(1) + s) * (T(1) + s)) / nn;  // c'(n)/n
        T vg = dot_flat(v, g);
        Mat<T>& ga = grad_of(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * g[i] + cp_over_n * vg * v[i];
        break;
      }
      case Op::kVecNorm: {
        const Mat<T>& v = value_of(n.a);
        T nn = n.value[0];
        if (static_cast<double>(nn) < kSquashEps) break;
        Mat<T>& ga = grad_of(n.a);
        T k = g[0] / nn;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += k * v[i];
        break;
      }
      case Op::kDot: {
        T gs = g[0];
        Mat<T>& ga = grad_of(n.a);
        const Mat<T>& bv = value_of(n.b);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs * bv[i];
        Mat<T>& gb = grad_of(n.b);
        const Mat<T>& av = value_of(n.a);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gs * av[i];
        break;
      }
      case Op::kSum: {
        T gs = g[0];
        Mat<T>& ga = grad_of(n.a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
        break;
      }
      case Op::kMax2: {
        const Mat<T>& av = value_of(n.a);
        const Mat<T>& bv = value_of(n.b);
        Mat<T>& ga = grad_of(n.a);
        Mat<T>& gb = grad_of(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (bv[i] > av[i])
            gb[i] += g[i];
          else
            ga[i] += g[i];
        }
        break;
      }
      case Op::kTranspose: {
        Mat<T>& ga = grad_of(n.a);
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
        break;
      }
      case Op::kSliceRows: {
        Mat<T>& ga = grad_of(n.a);
        for (int r = 0; r < n.i1; ++r)
          for (int c = 0; c < g.cols(); ++c) ga(n.i0 + r, c) += g(r, c);
        break;
      }
      case Op::kSliceCols: {
        Mat<T>& ga = grad_of(n.a);
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < n.i1; ++c) ga(r, n.i0 + c) += g(r, c);
        break;
      }
      case Op::kRowAsCol: {
        Mat<T>& ga = grad_of(n.a);
        for (int c = 0; c < g.rows(); ++c) ga(n.i0, c) += g(c, 0);
        break;
      }
      case Op::kConcatRows: {
        Mat<T>& ga = grad_of(n.a);
        Mat<T>& gb = grad_of(n.b);
        for (int r = 0; r < n.i0; ++r)
          for (int c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c);
        for (int r = 0; r < gb.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) gb(r, c) += g(n.i0 + r, c);
        break;
      }
      case Op::kConcatCols: {
        Mat<T>& ga = grad_of(n.a);
        Mat<T>& gb = grad_of(n.b);
        for (int r = 0; r < g.rows(); ++r) {
          for (int c = 0; c < n.i0; ++c) ga(r, c) += g(r, c);
          for (int c = 0; c < gb.cols(); ++c) gb(r, c) += g(r, n.i0 + c);
        }
        break;
      }
    }
  }

  void axpy(std::int32_t i, const Mat<T>& g, T k) {
    Mat<T>& ga = grad_of(i);
    for (std::size_t j = 0; j < ga.size(); ++j) ga[j] += k * g[j];
  }

  // out += a * b^T
  static void accum_matmul_nt(Mat<T>& out, const Mat<T>& a, const Mat<T>& b) {
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j) {
        T s = 0;
        for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
        out(i, j) += s;
      }
  }

  // out += a^T * b
  static void accum_matmul_tn(Mat<T>& out, const Mat<T>& a, const Mat<T>& b) {
    for (int k = 0; k < a.rows(); ++k)
      for (int i = 0; i < out.rows(); ++i) {
        const T aki = a(k, i);
        if (aki == T(0)) continue;
        for (int j = 0; j < out.cols(); ++j) out(i, j) += aki * b(k, j);
      }
  }

  static void backprop_softmax_span(T* ga, const T* y, const T* g, int n) {
    T yg = 0;
    for (int i = 0; i < n; ++i) yg += y[i] * g[i];
    for (int i = 0; i < n; ++i) ga[i] += y[i] * (g[i] - yg);
  }

  std::vector<Node> nodes_;
};

}  // namespace capsrel
