// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survmix/data.hpp"
#include "survmix/distributions.hpp"
#include "survmix/gibbs.hpp"
#include "survmix/params.hpp"

namespace survmix {

/// Mixture survival S(t | x) = sum_j eta_j (1 - Phi((log t - x'beta_j)/sigma_j)).
/// The profile x carries the covariates only; the intercept is implicit.
inline double mixture_survival(const MixtureParams& params,
                               const Eigen::VectorXd& x, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("mixture_survival: t must be > 0");
  if (x.size() + 1 != params.dim()) {
    throw std::invalid_argument("mixture_survival: profile dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < params.K(); ++j) {
    const Eigen::VectorXd& beta = params.beta(j);
    const double mu = beta(0) + beta.tail(x.size()).dot(x);
    s += params.weight(j) * lognormal_survival(t, mu, params.variance(j));
  }
  return s;
}

/// Survival curve on a time grid with an optional pointwise 95% band.
struct SurvivalCurve {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> lo95;
  std::vector<double> hi95;
  bool has_band = false;
  Eigen::VectorXd profile;
};

/// Log-spaced grid of m points spanning [tmin, tmax].
inline std::vector<double> make_log_grid(double tmin, double tmax, std::size_t m) {
  if (!(tmin > 0.0) || !(tmax > tmin) || m < 2) {
    throw std::invalid_argument("make_log_grid: need 0 < tmin < tmax and m >= 2");
  }
  std::vector<double> grid(m);
  const double l0 = std::log(tmin), l1 = std::log(tmax);
  for (std::size_t i = 0; i < m; ++i) {
    grid[i] = std::exp(l0 + (l1 - l0) * static_cast<double>(i) /
                                static_cast<double>(m - 1));
  }
  return grid;
}

/// Point curve from a single parameter estimate (no band).
inline SurvivalCurve survival_curve(const MixtureParams& params,
                                    const Eigen::VectorXd& x,
                                    const std::vector<double>& grid) {
  SurvivalCurve c;
  c.times = grid;
  c.profile = x;
  c.mean.reserve(grid.size());
  for (double t : grid) c.mean.push_back(mixture_survival(params, x, t));
  return c;
}

/// Posterior curve: S(t|x) is evaluated under every retained draw; the curve
/// reports the pointwise mean and 2.5%/97.5% quantiles.
inline SurvivalCurve posterior_survival_curve(const PosteriorDraws& draws,
                                              const Eigen::VectorXd& x,
                                              const std::vector<double>& grid) {
  if (draws.M() < 100) {
    throw std::invalid_argument("posterior_survival_curve: need >= 100 draws");
  }
  SurvivalCurve c;
  c.times = grid;
  c.profile = x;
  c.has_band = true;
  std::vector<double> vals(draws.M());
  for (double t : grid) {
    for (std::size_t m = 0; m < draws.M(); ++m) {
      vals[m] = mixture_survival(draws.draws[m], x, t);
    }
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) /
                        static_cast<double>(vals.size());
    c.mean.push_back(mean);
    c.lo95.push_back(quantile_type7(vals, 0.025));
    c.hi95.push_back(quantile_type7(vals, 0.975));
  }
  return c;
}

/// Conditional churn probability P(a < T <= b | T > c) with S(inf) = 0 and
/// the convention c <= a. With draws the query is evaluated per draw and
/// summarized by mean and a 95% interval.
struct ProbResult {
  double estimate = 0.0;
  std::optional<double> lo95;
  std::optional<double> hi95;
};

namespace detail {

inline double cond_prob_single(const MixtureParams& params,
                               const Eigen::VectorXd& x, double a, double b,
                               double c) {
  const double sc = (c > 0.0) ? mixture_survival(params, x, c) : 1.0;
  if (!(sc > 0.0)) {
    throw std::runtime_error(
        "conditional_churn_prob: conditioning survival is numerically zero");
  }
  const double lo = std::max(a, c);
  const double sa = (lo > 0.0) ? mixture_survival(params, x, lo) : 1.0;
  const double sb = std::isinf(b) ? 0.0 : mixture_survival(params, x, b);
  return (sa - sb) / sc;
}

inline void check_prob_query(double a, double b, double c) {
  if (!(a >= 0.0) || !(c >= 0.0)) {
    throw std::invalid_argument("conditional_churn_prob: a and c must be >= 0");
  }
  if (!(b >= a)) {
    throw std::invalid_argument("conditional_churn_prob: need b >= a");
  }
  if (!(c <= a)) {
    throw std::invalid_argument("conditional_churn_prob: need c <= a");
  }
}

}  // namespace detail

inline ProbResult conditional_churn_prob(const MixtureParams& params,
                                         const Eigen::VectorXd& x, double a,
                                         double b, double c) {
  detail::check_prob_query(a, b, c);
  return {detail::cond_prob_single(params, x, a, b, c), std::nullopt, std::nullopt};
}

inline ProbResult conditional_churn_prob(const PosteriorDraws& draws,
                                         const Eigen::VectorXd& x, double a,
                                         double b, double c) {
  detail::check_prob_query(a, b, c);
  if (draws.M() < 100) {
    throw std::invalid_argument("conditional_churn_prob: need >= 100 draws");
  }
  std::vector<double> vals(draws.M());
  for (std::size_t m = 0; m < draws.M(); ++m) {
    vals[m] = detail::cond_prob_single(draws.draws[m], x, a, b, c);
  }
  ProbResult r;
  r.estimate = std::accumulate(vals.begin(), vals.end(), 0.0) /
               static_cast<double>(vals.size());
  r.lo95 = quantile_type7(vals, 0.025);
  r.hi95 = quantile_type7(vals, 0.975);
  return r;
}

/// Curve CSV: time,mean,lo95,hi95 (band columns repeat the mean for point
/// curves, keeping the format fixed).
inline void save_curve_csv(const SurvivalCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "time,mean,lo95,hi95\n";
  for (std::size_t i = 0; i < curve.times.size(); ++i) {
    const double lo = curve.has_band ? curve.lo95[i] : curve.mean[i];
    const double hi = curve.has_band ? curve.hi95[i] : curve.mean[i];
    out << detail::format_double(curve.times[i]) << ","
        << detail::format_double(curve.mean[i]) << ","
        << detail::format_double(lo) << "," << detail::format_double(hi) << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Probability query JSON: estimate, optional lo95/hi95, echo of (a,b,c,x).
inline nlohmann::json prob_result_to_json(const ProbResult& r,
                                          const Eigen::VectorXd& x, double a,
                                          double b, double c) {
  nlohmann::json j;
  j["estimate"] = r.estimate;
  if (r.lo95) j["lo95"] = *r.lo95;
  if (r.hi95) j["hi95"] = *r.hi95;
  j["a"] = a;
  if (std::isinf(b)) {
    j["b"] = "inf";
  } else {
    j["b"] = b;
  }
  j["c"] = c;
  j["x"] = std::vector<double>(x.data(), x.data() + x.size());
  return j;
}

}  // namespace survmix
