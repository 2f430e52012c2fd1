#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "cgflow/tensor.hpp"

namespace test_util {

// Central finite differences of a recomputable scalar loss with respect
// to every element of the given parameter tensors. The loss closure must
// read the parameters' current values each call.
inline std::vector<double> fd_gradient(const std::function<double()>& loss,
                                       const std::vector<cgflow::Tensor*>& params,
                                       double h = 1e-5) {
  std::vector<double> out;
  for (cgflow::Tensor* p : params) {
    for (std::size_t k = 0; k < p->size(); ++k) {
      const double saved = (*p)[k];
      (*p)[k] = saved + h;
      const double up = loss();
      (*p)[k] = saved - h;
      const double down = loss();
      (*p)[k] = saved;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return out;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Energy distance two-sample statistic over rows of x and y.
inline double energy_statistic(const cgflow::Tensor& x, const cgflow::Tensor& y) {
  auto dist = [](const cgflow::Tensor& a, std::size_t i, const cgflow::Tensor& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const double d = a(i, c) - b(j, c);
      s += d * d;
    }
    return std::sqrt(s);
  };
  const double nx = static_cast<double>(x.rows()), ny = static_cast<double>(y.rows());
  double dxy = 0.0, dxx = 0.0, dyy = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) dxy += dist(x, i, y, j);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.rows(); ++j) dxx += dist(x, i, x, j);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j) dyy += dist(y, i, y, j);
  return 2.0 * dxy / (nx * ny) - dxx / (nx * nx) - dyy / (ny * ny);
}

// Permutation test: fraction of label shuffles whose statistic meets or
// exceeds the observed one.
inline double energy_permutation_quantile(const cgflow::Tensor& x, const cgflow::Tensor& y,
                                          std::size_t n_perm, std::uint64_t seed,
                                          double observed) {
  cgflow::Tensor pool(x.rows() + y.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) pool(i, c) = x(i, c);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) pool(x.rows() + i, c) = y(i, c);
  cgflow::Rng rng(seed);
  std::vector<std::size_t> idx(pool.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::size_t exceed = 0;
  for (std::size_t t = 0; t < n_perm; ++t) {
    rng.shuffle(idx);
    cgflow::Tensor px(x.rows(), x.cols()), py(y.rows(), y.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) px(i, c) = pool(idx[i], c);
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) py(i, c) = pool(idx[x.rows() + i], c);
    if (energy_statistic(px, py) >= observed) ++exceed;
  }
  return static_cast<double>(exceed) / static_cast<double>(n_perm);
}

// Scratch directory unique to a test, wiped on construction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("cgflow_test_" + tag);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace test_util
