// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace survmix {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
inline constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343819;

inline double normal_pdf(double x) {
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline double normal_log_pdf(double x) { return -0.5 * (kLog2Pi + x * x); }

/// Phi(x), via the complementary error function (accurate in both tails).
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * M_SQRT1_2);
}

/// Upper tail 1 - Phi(x).
inline double normal_sf(double x) { return 0.5 * std::erfc(x * M_SQRT1_2); }

/// log(1 - Phi(x)), safe far into the right tail where erfc underflows.
inline double log_normal_sf(double x) {
  if (x < 35.0) {
    return std::log(normal_sf(x));
  }
  const double r2 = 1.0 / (x * x);
  return -0.5 * x * x - 0.5 * kLog2Pi - std::log(x) +
         std::log1p(r2 * (-1.0 + 3.0 * r2 * (1.0 - 5.0 * r2)));
}

/// Inverse normal CDF (Acklam's rational approximation, refined by one Halley
/// step against erfc so the result is accurate to close to machine precision).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement; exp(x^2/2) stays finite for any p representable > 0.
  const double err = normal_cdf(x) - p;
  const double u = err * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

/// Inverse Mills ratio phi(a) / (1 - Phi(a)); series branch avoids the
/// underflow of erfc beyond a ~ 37 and keeps the far tail accurate.
inline double mills_lambda(double a) {
  if (a < 30.0) {
    return normal_pdf(a) / normal_sf(a);
  }
  const double u = 1.0 / (a * a);
  return a * (1.0 + u * (1.0 + u * (-2.0 + u * (10.0 - 74.0 * u))));
}

}  // namespace survmix
