#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sanlab/errors.hpp"
#include "sanlab/rng.hpp"

namespace sanlab {

// Dense row-major tensor. Training instantiates S = float (32-bit storage);
// the gradient-check path instantiates S = double end to end. Reductions
// accumulate in 64-bit either way.
template <class S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;

  explicit TensorT(std::vector<int> shape_in) : shape(std::move(shape_in)) {
    data.assign(checked_numel(shape), S(0));
  }

  TensorT(std::vector<int> shape_in, std::vector<S> data_in)
      : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (checked_numel(shape) != data.size())
      throw ShapeError("tensor: shape/data size mismatch");
  }

  static std::size_t checked_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor: nonpositive dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int> shape, S value) {
    TensorT t(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
  }

  static TensorT randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
    TensorT t(std::move(shape));
    for (S& x : t.data) x = static_cast<S>(rng.normal(0.0, stddev));
    return t;
  }

  std::size_t numel() const { return data.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return numel() == 1; }

  int rows() const {
    require_matrix();
    return shape[0];
  }
  int cols() const {
    require_matrix();
    return shape[1];
  }
  void require_matrix() const {
    if (shape.size() != 2) throw ShapeError("tensor: expected a matrix");
  }

  S& at(int i) { return data[static_cast<std::size_t>(i)]; }
  S at(int i) const { return data[static_cast<std::size_t>(i)]; }
  S& at(int i, int j) {
    return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(shape[1]) +
                static_cast<std::size_t>(j)];
  }
  S at(int i, int j) const {
    return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(shape[1]) +
                static_cast<std::size_t>(j)];
  }

  bool all_finite() const {
    for (S x : data)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  bool same_shape(const TensorT& other) const { return shape == other.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

using Tensor = TensorT<float>;

namespace detail {

template <class S>
using EigenRowMajor =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapConst = Eigen::Map<const EigenRowMajor<S>>;
template <class S>
using Map = Eigen::Map<EigenRowMajor<S>>;

inline void pin_eigen_single_threaded() {
  static const bool done = [] {
    Eigen::setNbThreads(1);
    return true;
  }();
  (void)done;
}

// C = op(A) * op(B) with 64-bit accumulation, parallel over fixed-size row
// blocks of C so the result is bitwise identical for any thread count.
template <class S>
void gemm_f64(const TensorT<S>& a, bool trans_a, const TensorT<S>& b, bool trans_b,
              TensorT<S>& c, int m, int k, int n) {
  pin_eigen_single_threaded();
  const int a_rows = trans_a ? k : m;
  const int a_cols = trans_a ? m : k;
  const int b_rows = trans_b ? n : k;
  const int b_cols = trans_b ? k : n;
  MapConst<S> am(a.data.data(), a_rows, a_cols);
  MapConst<S> bm(b.data.data(), b_rows, b_cols);
  EigenRowMajor<double> bd =
      trans_b ? EigenRowMajor<double>(bm.template cast<double>().transpose())
              : EigenRowMajor<double>(bm.template cast<double>());
  Map<S> cm(c.data.data(), m, n);

  const int block = 256;
  const int nblocks = (m + block - 1) / block;
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < nblocks; ++bi) {
    const int r0 = bi * block;
    const int rows = std::min(block, m - r0);
    EigenRowMajor<double> ad =
        trans_a ? EigenRowMajor<double>(
                      am.middleCols(r0, rows).template cast<double>().transpose())
                : EigenRowMajor<double>(am.middleRows(r0, rows).template cast<double>());
    EigenRowMajor<double> cd(rows, n);
    cd.noalias() = ad * bd;
    cm.middleRows(r0, rows) = cd.template cast<S>();
  }
}

}  // namespace detail

// c[i][j] = sum_l a[i][l] * b[l][j], accumulated in 64-bit.
template <class S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  a.require_matrix();
  b.require_matrix();
  if (a.shape[1] != b.shape[0])
    throw ShapeError("matmul: inner dimensions mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  TensorT<S> c({a.shape[0], b.shape[1]});
  detail::gemm_f64(a, false, b, false, c, a.shape[0], a.shape[1], b.shape[1]);
  return c;
}

// a * b^T
template <class S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b) {
  a.require_matrix();
  b.require_matrix();
  if (a.shape[1] != b.shape[1])
    throw ShapeError("matmul_nt: inner dimensions mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  TensorT<S> c({a.shape[0], b.shape[0]});
  detail::gemm_f64(a, false, b, true, c, a.shape[0], a.shape[1], b.shape[0]);
  return c;
}

// a^T * b
template <class S>
TensorT<S> matmul_tn(const TensorT<S>& a, const TensorT<S>& b) {
  a.require_matrix();
  b.require_matrix();
  if (a.shape[0] != b.shape[0])
    throw ShapeError("matmul_tn: inner dimensions mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  TensorT<S> c({a.shape[1], b.shape[1]});
  detail::gemm_f64(a, true, b, false, c, a.shape[1], a.shape[0], b.shape[1]);
  return c;
}

// Probability vector via max-subtraction; sums accumulate in 64-bit.
template <class S>
TensorT<S> softmax(const TensorT<S>& v) {
  if (v.numel() == 0) throw DataError("softmax: empty input");
  if (!v.all_finite()) throw NumericError("softmax: non-finite input");
  double max_x = -std::numeric_limits<double>::infinity();
  for (S x : v.data) max_x = std::max(max_x, static_cast<double>(x));
  std::vector<double> e(v.numel());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.numel(); ++i) {
    e[i] = std::exp(static_cast<double>(v.data[i]) - max_x);
    sum += e[i];
  }
  TensorT<S> out(v.shape);
  for (std::size_t i = 0; i < v.numel(); ++i) out.data[i] = static_cast<S>(e[i] / sum);
  return out;
}

// Row-wise log-sum-exp of a TxV matrix, 64-bit accumulation.
template <class S>
std::vector<double> row_logsumexp(const TensorT<S>& logits) {
  logits.require_matrix();
  const int t = logits.shape[0], v = logits.shape[1];
  std::vector<double> out(static_cast<std::size_t>(t));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < t; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < v; ++j) m = std::max(m, static_cast<double>(logits.at(i, j)));
    double s = 0.0;
    for (int j = 0; j < v; ++j) s += std::exp(static_cast<double>(logits.at(i, j)) - m);
    out[static_cast<std::size_t>(i)] = m + std::log(s);
  }
  return out;
}

// L = -sum_t log p(targets[t] | logits row t). Masked positions are skipped.
template <class S>
double cross_entropy_sequence(const TensorT<S>& logits, const std::vector<int>& targets,
                              const std::vector<std::uint8_t>* mask = nullptr) {
  logits.require_matrix();
  const int t = logits.shape[0], v = logits.shape[1];
  if (targets.empty() || t == 0) throw DataError("cross_entropy: empty sequence");
  if (static_cast<int>(targets.size()) != t)
    throw ShapeError("cross_entropy: targets length != logits rows");
  if (mask && static_cast<int>(mask->size()) != t)
    throw ShapeError("cross_entropy: mask length != logits rows");
  if (!logits.all_finite()) throw NumericError("cross_entropy: non-finite logits");
  for (int i = 0; i < t; ++i)
    if (targets[static_cast<std::size_t>(i)] < 0 || targets[static_cast<std::size_t>(i)] >= v)
      throw DataError("cross_entropy: target id out of range at position " +
                      std::to_string(i));
  std::vector<double> lse = row_logsumexp(logits);
  double loss = 0.0;
  for (int i = 0; i < t; ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) continue;
    loss += lse[static_cast<std::size_t>(i)] -
            static_cast<double>(logits.at(i, targets[static_cast<std::size_t>(i)]));
  }
  return loss;
}

template <class S>
double max_abs_diff(const TensorT<S>& a, const TensorT<S>& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

}  // namespace sanlab
