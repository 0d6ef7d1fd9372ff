// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "survmix/data.hpp"
#include "survmix/normal.hpp"
#include "survmix/params.hpp"

namespace survmix {

/// Posterior component probabilities for one record, given its value z and
/// the component means mu_j. Evaluated in log space and normalized, so far
/// tails cannot overflow or produce an all-zero row.
inline void responsibilities_row(double z, const Eigen::VectorXd& mu,
                                 const MixtureParams& params, double* out) {
  const std::size_t k = params.K();
  double maxlog = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    const double s2 = params.variance(j);
    const double r = z - mu(static_cast<Eigen::Index>(j));
    out[j] = std::log(params.weight(j)) - 0.5 * (kLog2Pi + std::log(s2)) -
             0.5 * r * r / s2;
    maxlog = std::max(maxlog, out[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    out[j] = std::exp(out[j] - maxlog);
    total += out[j];
  }
  for (std::size_t j = 0; j < k; ++j) out[j] /= total;
}

/// Posterior component probabilities for one censored record, given its
/// observed log-time y: the latent true log-time is integrated out, leaving
/// mass proportional to eta_j * P(z >= y | component j). Allocating censored
/// records by their imputed z instead lets the narrow component capture and
/// hold them (the imputation and the allocation reinforce each other), which
/// visibly biases the weights; the marginal form has no such feedback.
inline void censored_responsibilities_row(double y, const Eigen::VectorXd& mu,
                                          const MixtureParams& params,
                                          double* out) {
  const std::size_t k = params.K();
  double maxlog = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    const double sd = std::sqrt(params.variance(j));
    const double u = (y - mu(static_cast<Eigen::Index>(j))) / sd;
    out[j] = std::log(params.weight(j)) + log_normal_sf(u);
    maxlog = std::max(maxlog, out[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    out[j] = std::exp(out[j] - maxlog);
    total += out[j];
  }
  for (std::size_t j = 0; j < k; ++j) out[j] /= total;
}

/// Observed-data log-likelihood on the log-time scale: events contribute the
/// normal mixture density, censored records the mixture survival.
inline double observed_data_loglik(const SurvivalDataset& data,
                                   const MixtureParams& params) {
  const Eigen::MatrixXd x = data.design_matrix();
  const std::size_t k = params.K();
  Eigen::MatrixXd mu(x.rows(), k);
  for (std::size_t j = 0; j < k; ++j) {
    mu.col(static_cast<Eigen::Index>(j)) = x * params.beta(j);
  }
  const std::vector<double> y = data.log_times();
  double total = 0.0;
  std::vector<double> logterms(k);
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double s2 = params.variance(j);
      const double sd = std::sqrt(s2);
      const double u = (y[i] - mu(static_cast<Eigen::Index>(i),
                                  static_cast<Eigen::Index>(j))) / sd;
      const double lw = std::log(params.weight(j));
      if (data[i].status == 1) {
        logterms[j] = lw + normal_log_pdf(u) - std::log(sd);
      } else {
        logterms[j] = lw + log_normal_sf(u);
      }
    }
    const double m = *std::max_element(logterms.begin(), logterms.end());
    double s = 0.0;
    for (double lt : logterms) s += std::exp(lt - m);
    total += m + std::log(s);
  }
  return total;
}

namespace detail {

// Least squares through the normal equations; falls back to a small ridge
// when the Gram matrix is singular (e.g. a constant covariate in a group).
inline Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& xtx,
                                           const Eigen::VectorXd& xty) {
  Eigen::LLT<Eigen::MatrixXd> llt(xtx);
  if (llt.info() == Eigen::Success) return llt.solve(xty);
  const double ridge = 1e-8 * (1.0 + xtx.trace());
  Eigen::MatrixXd reg = xtx;
  reg.diagonal().array() += ridge;
  return Eigen::LLT<Eigen::MatrixXd>(reg).solve(xty);
}

}  // namespace detail

/// Deterministic starting point shared by both fitting engines: records are
/// split into K contiguous groups by log-time quantile, each group gets its
/// own least-squares fit and residual variance, and weights are group shares.
inline std::pair<MixtureParams, std::vector<int>> quantile_split_init(
    const SurvivalDataset& data, std::size_t k) {
  if (k < 1) throw std::invalid_argument("quantile_split_init: K must be >= 1");
  if (data.n() < k) {
    throw std::invalid_argument("quantile_split_init: need at least K records");
  }
  const std::vector<double> y = data.log_times();
  const Eigen::MatrixXd x = data.design_matrix();
  const std::size_t n = data.n();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });

  std::vector<int> alloc(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    alloc[order[r]] = static_cast<int>((r * k) / n);
  }

  const Eigen::Index d = x.cols();
  std::vector<double> weights(k, 0.0), variances(k, 0.0);
  std::vector<Eigen::VectorXd> betas(k);
  for (std::size_t j = 0; j < k; ++j) {
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(d);
    std::size_t nj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (alloc[i] != static_cast<int>(j)) continue;
      const auto row = x.row(static_cast<Eigen::Index>(i));
      xtx.noalias() += row.transpose() * row;
      xty.noalias() += row.transpose() * y[i];
      ++nj;
    }
    betas[j] = detail::solve_least_squares(xtx, xty);
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (alloc[i] != static_cast<int>(j)) continue;
      const double r = y[i] - x.row(static_cast<Eigen::Index>(i)).dot(betas[j]);
      ssr += r * r;
    }
    weights[j] = static_cast<double>(nj) / static_cast<double>(n);
    variances[j] = std::max(ssr / static_cast<double>(nj), 1e-6);
  }
  enforce_intercept_ordering(weights, betas, variances, &alloc);
  return {MixtureParams(std::move(weights), std::move(betas),
                        std::move(variances)),
          std::move(alloc)};
}

}  // namespace survmix
