#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "cgflow/errors.hpp"
#include "cgflow/rng.hpp"

#ifdef CGFLOW_USE_CBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace cgflow {

// Dense row-major matrix of doubles. Everything in the engine is rank 2;
// scalars are 1x1 and column vectors are nx1.
class Tensor {
 public:
  Tensor() : rows_(0), cols_(0) {}
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data_[0] = v;
    return t;
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Tensor t(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t i = 0;
    for (const auto& row : rows) {
      std::size_t j = 0;
      for (double v : row) t(i, j++) = v;
      ++i;
    }
    return t;
  }

  static Tensor column(const std::vector<double>& v) {
    Tensor t(v.size(), 1);
    t.data_ = v;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double item() const {
    if (size() != 1) throw ShapeMismatch("item() on tensor of size " + std::to_string(size()));
    return data_[0];
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_str() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

#ifdef CGFLOW_USE_CBLAS
namespace detail {
// Single-threaded BLAS: determinism comes for free and the engine's own
// chunk-level parallelism composes without oversubscription.
inline void pin_blas_threads() {
  static const bool done = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)done;
}
}  // namespace detail
#endif

// c = a @ b, accumulated in deterministic k-order per output element.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeMismatch("matmul " + a.shape_str() + " @ " + b.shape_str());
  Tensor c(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (n == 0 || k == 0 || m == 0) return c;
#ifdef CGFLOW_USE_CBLAS
  detail::pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(n),
              static_cast<int>(m), static_cast<int>(k), 1.0, a.data(), static_cast<int>(k),
              b.data(), static_cast<int>(m), 0.0, c.data(), static_cast<int>(m));
#else
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.data() + i * m;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
#endif
  return c;
}

// c = a^T @ b   (a: n x k, b: n x m, c: k x m)
inline Tensor matmul_at_b(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw ShapeMismatch("matmul_at_b " + a.shape_str() + " @ " + b.shape_str());
  Tensor c(a.cols(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (n == 0 || k == 0 || m == 0) return c;
#ifdef CGFLOW_USE_CBLAS
  detail::pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(k),
              static_cast<int>(m), static_cast<int>(n), 1.0, a.data(), static_cast<int>(k),
              b.data(), static_cast<int>(m), 0.0, c.data(), static_cast<int>(m));
#else
  for (std::size_t p = 0; p < k; ++p) {
    double* cp = c.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double aip = a(i, p);
      const double* bi = b.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
    }
  }
#endif
  return c;
}

// c = a @ b^T   (a: n x k, b: m x k, c: n x m)
inline Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw ShapeMismatch("matmul_a_bt " + a.shape_str() + " @ " + b.shape_str());
  Tensor c(a.rows(), b.rows());
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (n == 0 || k == 0 || m == 0) return c;
#ifdef CGFLOW_USE_CBLAS
  detail::pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(n),
              static_cast<int>(m), static_cast<int>(k), 1.0, a.data(), static_cast<int>(k),
              b.data(), static_cast<int>(k), 0.0, c.data(), static_cast<int>(m));
#else
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    double* ci = c.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
#endif
  return c;
}

inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w(fan_in, fan_out);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = rng.uniform(-bound, bound);
  return w;
}

}  // namespace cgflow
