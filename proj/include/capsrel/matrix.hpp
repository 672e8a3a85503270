#pragma once

// Dense row-major matrix over float or double, plus the few plain kernels the
// tape and optimizer need. Every public operation validates shapes.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "capsrel/errors.hpp"

namespace capsrel {

template <class T>
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, T fill = T(0))
      : rows_(rows), cols_(cols), d_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
    if (rows < 0 || cols < 0) throw ShapeError("negative dimension in " + shape_str());
  }

  static Mat zeros(int rows, int cols) { return Mat(rows, cols, T(0)); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return d_.size(); }
  bool empty() const { return d_.empty(); }

  T& operator()(int r, int c) { return d_[static_cast<std::size_t>(r) * cols_ + c]; }
  T operator()(int r, int c) const { return d_[static_cast<std::size_t>(r) * cols_ + c]; }
  T& operator[](std::size_t i) { return d_[i]; }
  T operator[](std::size_t i) const { return d_[i]; }
  T* data() { return d_.data(); }
  const T* data() const { return d_.data(); }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  bool all_finite() const {
    for (T v : d_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(T v) { d_.assign(d_.size(), v); }

  bool operator==(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && d_ == o.d_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> d_;
};

template <class T>
inline void check_same_shape(const Mat<T>& a, const Mat<T>& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": " + a.shape_str() + " vs " + b.shape_str());
}

template <class T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
  Mat<T> out(a.rows(), b.cols());
  // i-k-j order keeps both streams row-major.
  for (int i = 0; i < a.rows(); ++i) {
    T* orow = out.data() + static_cast<std::size_t>(i) * out.cols();
    for (int k = 0; k < a.cols(); ++k) {
      const T aik = a(i, k);
      if (aik == T(0)) continue;
      const T* brow = b.data() + static_cast<std::size_t>(k) * b.cols();
      for (int j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

template <class T>
Mat<T> add(const Mat<T>& a, const Mat<T>& b) {
  check_same_shape(a, b, "add");
  Mat<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

template <class T>
Mat<T> sub(const Mat<T>& a, const Mat<T>& b) {
  check_same_shape(a, b, "sub");
  Mat<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

template <class T>
Mat<T> hadamard(const Mat<T>& a, const Mat<T>& b) {
  check_same_shape(a, b, "hadamard");
  Mat<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <class T>
Mat<T> scale(const Mat<T>& a, T c) {
  Mat<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return out;
}

template <class T>
Mat<T> transpose_of(const Mat<T>& a) {
  Mat<T> out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <class T>
T dot_flat(const Mat<T>& a, const Mat<T>& b) {
  check_same_shape(a, b, "dot");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class T>
T norm_flat(const Mat<T>& a) {
  return std::sqrt(dot_flat(a, a));
}

}  // namespace capsrel
