#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <cstddef>

namespace cgflow {

// Branch-light polynomial exp/tanh kernels. Pure arithmetic, so results
// are identical across runs and platforms with IEEE doubles; relative
// error stays below ~1e-12, far inside every tolerance used by the
// training and verification paths. The payoff is that the compiler can
// vectorize the elementwise loops, which libm calls prevent.
namespace fastmath {

inline constexpr double kLog2E = 1.4426950408889634074;
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;

// exp(r) - 1 for |r| <= 0.5*ln2, as r * P(r); degree-9 Taylor tail keeps
// the relative error near 2e-16 on the reduced interval.
inline double expm1_poly(double r) {
  const double c2 = 1.0 / 2.0, c3 = 1.0 / 6.0, c4 = 1.0 / 24.0, c5 = 1.0 / 120.0,
               c6 = 1.0 / 720.0, c7 = 1.0 / 5040.0, c8 = 1.0 / 40320.0, c9 = 1.0 / 362880.0,
               c10 = 1.0 / 3628800.0;
  const double p =
      1.0 +
      r * (c2 +
           r * (c3 + r * (c4 + r * (c5 + r * (c6 + r * (c7 + r * (c8 + r * (c9 + r * c10))))))));
  return r * p;
}

inline double ldexp_fast(double x, long k) {
  const std::uint64_t bits = static_cast<std::uint64_t>(k + 1023) << 52;
  double scale;
  std::memcpy(&scale, &bits, sizeof(double));
  return x * scale;
}

// exp(x) for x <= ~700; underflows to 0 below ~-745 like the libm version.
inline double exp_approx(double x) {
  if (x < -708.0) return 0.0;
  if (x > 708.0) return std::numeric_limits<double>::infinity();
  const double kd = std::nearbyint(x * kLog2E);
  const long k = static_cast<long>(kd);
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  const double q = expm1_poly(r);
  if (k > 1000 || k < -1000) return std::ldexp(1.0 + q, static_cast<int>(k));
  return ldexp_fast(1.0 + q, k);
}

// tanh via expm1(2|x|)/(expm1(2|x|) + 2); the expm1 form avoids the
// catastrophic cancellation of (e-1)/(e+1) near zero.
inline double tanh_approx(double x) {
  const double ax = std::abs(x);
  if (ax > 20.0) return x > 0.0 ? 1.0 : -1.0;
  const double y = 2.0 * ax;
  const double kd = std::nearbyint(y * kLog2E);
  const long k = static_cast<long>(kd);
  const double r = (y - kd * kLn2Hi) - kd * kLn2Lo;
  const double q = expm1_poly(r);
  const double em1 = k == 0 ? q : ldexp_fast(1.0 + q, k) - 1.0;
  const double t = em1 / (em1 + 2.0);
  return x >= 0.0 ? t : -t;
}

inline void tanh_inplace(double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) p[i] = tanh_approx(p[i]);
}

// elu(u) + 1 + delta, strictly positive
inline double elu1p(double u, double delta) {
  return u >= 0.0 ? u + 1.0 + delta : exp_approx(u) + delta;
}

// derivative of elu1p given the output value
inline double elu1p_grad(double u, double value, double delta) {
  return u >= 0.0 ? 1.0 : value - delta;
}

}  // namespace fastmath
}  // namespace cgflow
