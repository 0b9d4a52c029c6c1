#pragma once

#include <cmath>
#include <cstdint>

#include "ous/common.hpp"

// Transcendentals built only from IEEE-754 +,-,*,/ and sqrt, so that every
// platform produces bit-identical results. libm's sin/cos/log are allowed to
// differ by ulps between implementations, which would break the byte-level
// reproducibility of the synthetic corpus. Accuracy here is ~1e-15 relative,
// which is far below every tolerance used by the generator and tests.

namespace ous::detmath {

namespace detail {
// pi/2 split for Cody-Waite argument reduction (valid for |x| up to ~2^26).
inline constexpr double kPio2Hi = 1.5707963267341256e+00;
inline constexpr double kPio2Lo = 6.0771005065061922e-11;
inline constexpr double kPio2Lo2 = 2.0222662487959506e-21;
inline constexpr double kTwoOverPi = 6.3661977236758138e-01;

// sin on [-pi/4, pi/4] by Taylor series.
inline double sin_poly(double r) {
  double r2 = r * r;
  double term = r;
  double sum = r;
  // r^(2k+1)/(2k+1)!, k = 1..8
  for (int k = 1; k <= 8; ++k) {
    term *= -r2 / static_cast<double>((2 * k) * (2 * k + 1));
    sum += term;
  }
  return sum;
}

// cos on [-pi/4, pi/4] by Taylor series.
inline double cos_poly(double r) {
  double r2 = r * r;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -r2 / static_cast<double>((2 * k - 1) * (2 * k));
    sum += term;
  }
  return sum;
}

inline void reduce(double x, int64_t& quadrant, double& r) {
  double fn = x * kTwoOverPi;
  // round to nearest integer without libm rint
  double n = (fn >= 0.0) ? static_cast<double>(static_cast<int64_t>(fn + 0.5))
                         : static_cast<double>(static_cast<int64_t>(fn - 0.5));
  r = ((x - n * kPio2Hi) - n * kPio2Lo) - n * kPio2Lo2;
  quadrant = static_cast<int64_t>(n) & 3;
}
}  // namespace detail

inline double sin(double x) {
  check(std::isfinite(x), ErrorKind::Numeric, "detmath::sin: non-finite input");
  int64_t q;
  double r;
  detail::reduce(x, q, r);
  switch (q) {
    case 0: return detail::sin_poly(r);
    case 1: return detail::cos_poly(r);
    case 2: return -detail::sin_poly(r);
    default: return -detail::cos_poly(r);
  }
}

inline double cos(double x) {
  check(std::isfinite(x), ErrorKind::Numeric, "detmath::cos: non-finite input");
  int64_t q;
  double r;
  detail::reduce(x, q, r);
  switch (q) {
    case 0: return detail::cos_poly(r);
    case 1: return -detail::sin_poly(r);
    case 2: return -detail::cos_poly(r);
    default: return detail::sin_poly(r);
  }
}

// exp via 2^n * e^r with r in [-ln2/2, ln2/2] (two-part ln2 reduction),
// Taylor series on the reduced argument, exact power-of-two scaling.
inline double exp(double x) {
  check(std::isfinite(x), ErrorKind::Numeric, "detmath::exp: non-finite input");
  if (x < -745.0) return 0.0;
  check(x <= 709.0, ErrorKind::Numeric, "detmath::exp: overflow");
  constexpr double kInvLn2 = 1.4426950408889634e+00;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  double fn = x * kInvLn2;
  int64_t n = (fn >= 0.0) ? static_cast<int64_t>(fn + 0.5) : static_cast<int64_t>(fn - 0.5);
  double nd = static_cast<double>(n);
  double r = (x - nd * kLn2Hi) - nd * kLn2Lo;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 13; ++k) {
    term *= r / static_cast<double>(k);
    sum += term;
  }
  return std::ldexp(sum, static_cast<int>(n));
}

// Natural log via atanh series after normalizing the mantissa to [1/sqrt2, sqrt2).
inline double log(double x) {
  check(std::isfinite(x) && x > 0.0, ErrorKind::Numeric,
        "detmath::log: input must be finite and positive");
  constexpr double kLn2 = 6.9314718055994531e-01;
  constexpr double kSqrt2 = 1.4142135623730951e+00;
  int e = 0;
  double m = std::frexp(x, &e);  // m in [0.5, 1)
  m *= 2.0;
  e -= 1;
  if (m >= kSqrt2) {
    m *= 0.5;
    e += 1;
  }
  double t = (m - 1.0) / (m + 1.0);
  double t2 = t * t;
  double term = t;
  double sum = t;
  for (int k = 1; k <= 13; ++k) {
    term *= t2;
    sum += term / static_cast<double>(2 * k + 1);
  }
  return static_cast<double>(e) * kLn2 + 2.0 * sum;
}

}  // namespace ous::detmath
