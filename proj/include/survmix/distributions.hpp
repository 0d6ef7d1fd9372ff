// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "survmix/normal.hpp"
#include "survmix/rng.hpp"

namespace survmix {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Density of LogNormal(mu, sigma2) at t > 0.
inline double lognormal_pdf(double t, double mu, double sigma2) {
  if (!(t > 0.0)) throw std::invalid_argument("lognormal_pdf: t must be > 0");
  if (!(sigma2 > 0.0)) {
    throw std::invalid_argument("lognormal_pdf: sigma2 must be > 0");
  }
  const double sigma = std::sqrt(sigma2);
  const double z = (std::log(t) - mu) / sigma;
  return normal_pdf(z) / (t * sigma);
}

/// Survival P(T > t) of LogNormal(mu, sigma2).
inline double lognormal_survival(double t, double mu, double sigma2) {
  if (!(t > 0.0)) {
    throw std::invalid_argument("lognormal_survival: t must be > 0");
  }
  if (!(sigma2 > 0.0)) {
    throw std::invalid_argument("lognormal_survival: sigma2 must be > 0");
  }
  return normal_sf((std::log(t) - mu) / std::sqrt(sigma2));
}

struct TruncNormMoments {
  double mean;
  double variance;
};

namespace detail {

// Standardized moments of N(0,1) truncated to [a, b], with bounds possibly
// infinite. Works through upper-tail quantities when both bounds are on the
// same side, which is where the naive Phi(b) - Phi(a) difference cancels.
inline TruncNormMoments std_truncnorm_moments(double a, double b) {
  if (a == -kInf && b == kInf) return {0.0, 1.0};
  // Reduce to a >= some bound by mirror symmetry.
  if (a == -kInf || (b != kInf && a + b < 0.0)) {
    TruncNormMoments m = std_truncnorm_moments(-b, -a);
    return {-m.mean, m.variance};
  }
  // From here a is finite and a + b >= 0.
  double shift, quad;  // (phi(a)-phi(b))/Z and (a phi(a)-b phi(b))/Z
  if (a >= 30.0) {
    // Deep same-side tail: factor out phi(a) and use Mills ratios.
    const double la = mills_lambda(a);
    const double r =
        (b == kInf) ? 0.0 : std::exp(-0.5 * (b - a) * (b + a));  // phi(b)/phi(a)
    const double z_over_phia = 1.0 / la - (b == kInf ? 0.0 : r / mills_lambda(b));
    shift = (1.0 - r) / z_over_phia;
    quad = (a - (b == kInf ? 0.0 : b * r)) / z_over_phia;
  } else {
    double z;
    if (a >= 0.0) {
      z = normal_sf(a) - (b == kInf ? 0.0 : normal_sf(b));
    } else {
      z = normal_cdf(b) - normal_cdf(a);
    }
    if (!(z > 0.0)) {
      throw std::runtime_error("truncnorm_moments: truncation mass underflow");
    }
    const double pa = normal_pdf(a);
    const double pb = (b == kInf) ? 0.0 : normal_pdf(b);
    shift = (pa - pb) / z;
    quad = (a * pa - (b == kInf ? 0.0 : b * pb)) / z;
  }
  double var = 1.0 + quad - shift * shift;
  if (b == kInf && a > 30.0) {
    // 1 + a*lambda - lambda^2 cancels; use its asymptotic expansion instead.
    const double u = 1.0 / (a * a);
    var = u * (1.0 - u * (6.0 - 50.0 * u));
  }
  var = std::clamp(var, std::numeric_limits<double>::min(), 1.0);
  return {shift, var};
}

}  // namespace detail

/// First two moments of Normal(mu, sigma2) truncated to (lower, upper).
/// Stable for standardized bounds up to |30| and beyond (series fallback).
inline TruncNormMoments truncnorm_moments(double mu, double sigma2,
                                          double lower, double upper) {
  if (!(sigma2 > 0.0)) {
    throw std::invalid_argument("truncnorm_moments: sigma2 must be > 0");
  }
  if (!(lower < upper)) {
    throw std::invalid_argument("truncnorm_moments: degenerate interval");
  }
  const double sigma = std::sqrt(sigma2);
  const double a = (lower == -kInf) ? -kInf : (lower - mu) / sigma;
  const double b = (upper == kInf) ? kInf : (upper - mu) / sigma;
  const TruncNormMoments m = detail::std_truncnorm_moments(a, b);
  return {mu + sigma * m.mean, sigma2 * m.variance};
}

namespace detail {

// One-sided lower truncation at a (standardized). Rejection from the normal
// when the bound is low, inverse CDF in the moderate tail, and Robert's
// exponential-proposal rejection in the far tail, so the expected number of
// iterations stays bounded no matter how extreme the bound is.
inline double sample_std_lower_truncnorm(double a, RngStream& rng) {
  if (a <= 0.0) {
    for (;;) {
      const double z = rng.normal();
      if (z >= a) return z;
    }
  }
  if (a <= 4.0) {
    const double tail = normal_sf(a);
    const double v = tail * rng.uniform();
    return -normal_quantile(v);
  }
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double x = a + rng.exponential(alpha);
    const double d = x - alpha;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return x;
  }
}

}  // namespace detail

/// Draw from Normal(mu, sigma2) conditioned on (lower, upper); bounds may be
/// +-infinity. The draw always lies inside the interval.
inline double sample_truncated_normal(double mu, double sigma2, double lower,
                                      double upper, RngStream& rng) {
  if (!(sigma2 > 0.0)) {
    throw std::invalid_argument("sample_truncated_normal: sigma2 must be > 0");
  }
  if (!(lower < upper)) {
    throw std::invalid_argument("sample_truncated_normal: degenerate interval");
  }
  const double sigma = std::sqrt(sigma2);
  const double a = (lower == -kInf) ? -kInf : (lower - mu) / sigma;
  const double b = (upper == kInf) ? kInf : (upper - mu) / sigma;

  double z;
  if (a == -kInf && b == kInf) {
    z = rng.normal();
  } else if (b == kInf) {
    z = detail::sample_std_lower_truncnorm(a, rng);
  } else if (a == -kInf) {
    z = -detail::sample_std_lower_truncnorm(-b, rng);
  } else {
    // Two-sided. Inverse CDF while the interval mass is well resolved,
    // otherwise bounded uniform rejection against the dominating exponent.
    double mass;
    if (a >= 0.0) {
      mass = normal_sf(a) - normal_sf(b);
    } else if (b <= 0.0) {
      mass = normal_sf(-b) - normal_sf(-a);
    } else {
      mass = normal_cdf(b) - normal_cdf(a);
    }
    if (mass > 1e-10) {
      const double u = rng.uniform();
      if (a >= 0.0) {
        z = -normal_quantile(normal_sf(a) - u * mass);
      } else if (b <= 0.0) {
        z = normal_quantile(normal_sf(-b) + u * mass);
      } else {
        z = normal_quantile(normal_cdf(a) + u * mass);
      }
    } else {
      const double c = (a > 0.0) ? a : ((b < 0.0) ? b : 0.0);
      for (;;) {
        const double x = a + (b - a) * rng.uniform();
        if (std::log(rng.uniform()) <= 0.5 * (c * c - x * x)) {
          z = x;
          break;
        }
      }
    }
    z = std::clamp(z, a, b);
  }
  double x = mu + sigma * z;
  if (lower != -kInf) x = std::max(x, lower);
  if (upper != kInf) x = std::min(x, upper);
  return x;
}

/// Gamma(shape, rate) draw via Marsaglia-Tsang, boosted for shape < 1 so the
/// vague Gamma(0.01, 0.01) prior is handled correctly.
inline double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw std::invalid_argument("sample_gamma: shape and rate must be > 0");
  }
  if (shape < 1.0) {
    const double g = sample_gamma(shape + 1.0, 1.0, rng);
    const double u = rng.uniform();
    return g * std::pow(u, 1.0 / shape) / rate;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / (3.0 * std::sqrt(d));
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return d * v / rate;
    }
  }
}

/// Dirichlet draw by normalizing independent Gamma(alpha_j, 1) variates.
inline std::vector<double> sample_dirichlet(const std::vector<double>& alpha,
                                            RngStream& rng) {
  if (alpha.empty()) throw std::invalid_argument("sample_dirichlet: empty alpha");
  for (double a : alpha) {
    if (!(a > 0.0)) {
      throw std::invalid_argument("sample_dirichlet: alpha must be > 0");
    }
  }
  std::vector<double> g(alpha.size());
  for (;;) {
    double total = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) {
      g[j] = sample_gamma(alpha[j], 1.0, rng);
      total += g[j];
    }
    if (total > 0.0) {
      for (double& v : g) v /= total;
      return g;
    }
    // All gammas underflowed (only conceivable for minuscule alphas); retry.
  }
}

/// Categorical draw; returns a 0-based component index.
inline int sample_categorical(const std::vector<double>& probs, RngStream& rng) {
  if (probs.empty()) {
    throw std::invalid_argument("sample_categorical: empty probabilities");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) {
      throw std::invalid_argument("sample_categorical: negative probability");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("sample_categorical: probabilities must sum to 1");
  }
  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (std::size_t j = 0; j + 1 < probs.size(); ++j) {
    cum += probs[j];
    if (u <= cum) return static_cast<int>(j);
  }
  return static_cast<int>(probs.size()) - 1;
}

/// Multivariate normal draw parameterized by mean and precision (inverse
/// covariance). Sampling goes through the Cholesky factor of the precision:
/// x = mean + U^{-1} z with P = U'U and z standard normal.
inline Eigen::VectorXd sample_mvnormal_precision(const Eigen::VectorXd& mean,
                                                 const Eigen::MatrixXd& precision,
                                                 RngStream& rng) {
  if (precision.rows() != precision.cols() || precision.rows() != mean.size()) {
    throw std::invalid_argument("sample_mvnormal_precision: dimension mismatch");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error(
        "sample_mvnormal_precision: precision matrix is not positive definite");
  }
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mean + llt.matrixU().solve(z);
}

}  // namespace survmix
