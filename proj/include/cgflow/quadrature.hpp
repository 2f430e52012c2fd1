#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cgflow/errors.hpp"

namespace cgflow {

// Clenshaw-Curtis rule on [-1, 1] with the closed node set
// s_j = cos(j*pi/(Q-1)), j = 0..Q-1. Weights by the explicit cosine-sum
// formula; exact for polynomials of degree < Q and geometrically
// convergent for smooth integrands.
struct ClenshawCurtis {
  std::vector<double> nodes;    // descending from +1 to -1
  std::vector<double> weights;  // sum to 2

  explicit ClenshawCurtis(std::size_t q) {
    if (q < 2) throw ShapeMismatch("quadrature needs at least 2 nodes");
    const std::size_t n = q - 1;
    nodes.resize(q);
    weights.resize(q);
    for (std::size_t j = 0; j <= n; ++j) {
      nodes[j] = std::cos(static_cast<double>(j) * M_PI / static_cast<double>(n));
      double s = 0.0;
      for (std::size_t k = 1; k <= n / 2; ++k) {
        const double b = (2 * k == n) ? 1.0 : 2.0;
        s += b / static_cast<double>(4 * k * k - 1) *
             std::cos(2.0 * static_cast<double>(k * j) * M_PI / static_cast<double>(n));
      }
      const double c = (j == 0 || j == n) ? 1.0 : 2.0;
      weights[j] = c / static_cast<double>(n) * (1.0 - s);
    }
  }

  std::size_t size() const { return nodes.size(); }

  // integral of f over [a, b]
  template <typename Fn>
  double integrate(Fn&& f, double a, double b) const {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) acc += weights[j] * f(mid + half * nodes[j]);
    return acc * half;
  }
};

// Monotone scalar root finding: solves f(x) = target for increasing f.
// Starts from [lo, hi], doubles the bracket geometrically up to
// `max_expansions` times, then bisects to absolute tolerance `tol`.
template <typename Fn>
double bisect_increasing(Fn&& f, double target, double lo, double hi, double tol,
                         std::size_t max_expansions = 60) {
  double flo = f(lo), fhi = f(hi);
  std::size_t expansions = 0;
  while (flo > target && expansions < max_expansions) {
    lo *= 2.0;
    flo = f(lo);
    ++expansions;
  }
  while (fhi < target && expansions < max_expansions) {
    hi *= 2.0;
    fhi = f(hi);
    ++expansions;
  }
  if (flo > target || fhi < target)
    throw RootNotBracketed("no sign change after bracket expansion");
  std::size_t guard = 0;
  while (hi - lo > tol && guard++ < 200) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace cgflow
