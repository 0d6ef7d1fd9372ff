// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survmix/data.hpp"
#include "survmix/distributions.hpp"
#include "survmix/mixture.hpp"
#include "survmix/params.hpp"
#include "survmix/rng.hpp"

namespace survmix {

struct EmConfig {
  long max_iterations = 500;
  double tolerance = 1e-6;  // max relative parameter change
  /// Optional explicit start; the deterministic quantile split otherwise.
  std::optional<MixtureParams> init;
  /// Extra randomized starts (best final log-likelihood wins). 0 keeps the
  /// single deterministic start.
  int extra_starts = 0;
  std::uint64_t seed = 1;

  void validate() const {
    if (max_iterations <= 0) {
      throw std::invalid_argument("EmConfig: max_iterations must be > 0");
    }
    if (!(tolerance > 0.0)) {
      throw std::invalid_argument("EmConfig: tolerance must be > 0");
    }
    if (extra_starts < 0) {
      throw std::invalid_argument("EmConfig: extra_starts must be >= 0");
    }
  }
};

struct EmResult {
  MixtureParams params;
  long iterations = 0;
  bool converged = false;
  /// Observed-data log-likelihood after each iteration.
  std::vector<double> loglik_trajectory;
};

/// E-step responsibilities from the observed data: events weight components
/// by the normal density at y_i, censored records by the survival
/// P(z >= y_i | component j) with the latent time integrated out. Rows sum to
/// one; everything is evaluated in log space.
inline Eigen::MatrixXd e_step_responsibilities(const SurvivalDataset& data,
                                               const Eigen::MatrixXd& design,
                                               const MixtureParams& params) {
  const std::size_t n = data.n();
  const std::size_t k = params.K();
  Eigen::MatrixXd mu(design.rows(), k);
  for (std::size_t j = 0; j < k; ++j) {
    mu.col(static_cast<Eigen::Index>(j)) = design * params.beta(j);
  }
  Eigen::MatrixXd w(n, k);
  std::vector<double> row(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = std::log(data[i].time);
    const auto murow = mu.row(static_cast<Eigen::Index>(i));
    if (data[i].status == 1) {
      responsibilities_row(y, murow, params, row.data());
    } else {
      censored_responsibilities_row(y, murow, params, row.data());
    }
    for (std::size_t j = 0; j < k; ++j) {
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  return w;
}

/// Per-component conditional moments of the latent log-times. Events carry
/// their observed value with zero variance in every column; a censored record
/// gets E and Var of N(mu_ij, sigma2_j) truncated to [log t_i, inf).
struct ImputedMoments {
  Eigen::MatrixXd mean;      // n x K
  Eigen::MatrixXd variance;  // n x K

  /// Responsibility-weighted imputation (the single z_i vector).
  std::vector<double> blend(const Eigen::MatrixXd& responsibilities) const {
    std::vector<double> z(static_cast<std::size_t>(mean.rows()));
    for (Eigen::Index i = 0; i < mean.rows(); ++i) {
      z[static_cast<std::size_t>(i)] = responsibilities.row(i).dot(mean.row(i));
    }
    return z;
  }
};

inline ImputedMoments e_step_impute(const SurvivalDataset& data,
                                    const Eigen::MatrixXd& design,
                                    const MixtureParams& params) {
  const std::size_t n = data.n();
  const std::size_t k = params.K();
  Eigen::MatrixXd mu(design.rows(), k);
  for (std::size_t j = 0; j < k; ++j) {
    mu.col(static_cast<Eigen::Index>(j)) = design * params.beta(j);
  }
  ImputedMoments out;
  out.mean.resize(n, k);
  out.variance.setZero(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = std::log(data[i].time);
    for (std::size_t j = 0; j < k; ++j) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      const Eigen::Index jj = static_cast<Eigen::Index>(j);
      if (data[i].status == 1) {
        out.mean(ii, jj) = y;
      } else {
        const auto m = truncnorm_moments(mu(ii, jj), params.variance(j), y, kInf);
        out.mean(ii, jj) = m.mean;
        out.variance(ii, jj) = m.variance;
      }
    }
  }
  return out;
}

/// M-step: weights are responsibility column means; each component's
/// coefficients solve the weighted least squares against its own imputed
/// log-times; variances average the weighted squared residuals (against the
/// new means) plus the censored records' conditional variances. Components
/// come back sorted by intercept; `permutation_out` receives the applied
/// permutation when requested.
inline MixtureParams m_step(const SurvivalDataset& data,
                            const Eigen::MatrixXd& responsibilities,
                            const ImputedMoments& moments,
                            const Eigen::MatrixXd& design,
                            std::vector<int>* permutation_out = nullptr) {
  const std::size_t n = data.n();
  const std::size_t k = static_cast<std::size_t>(responsibilities.cols());
  const Eigen::Index d = design.cols();

  std::vector<double> weights(k), variances(k);
  std::vector<Eigen::VectorXd> betas(k);

  for (std::size_t j = 0; j < k; ++j) {
    const Eigen::Index jj = static_cast<Eigen::Index>(j);
    const auto wj = responsibilities.col(jj);
    const double total = wj.sum();
    if (total < 1e-8) {
      throw std::runtime_error("m_step: component " + std::to_string(j + 1) +
                               " collapsed (total responsibility " +
                               std::to_string(total) + ")");
    }
    weights[j] = total / static_cast<double>(n);

    Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd xtwz = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      const double wi = wj(ii);
      const auto row = design.row(ii);
      xtwx.noalias() += wi * row.transpose() * row;
      xtwz.noalias() += wi * row.transpose() * moments.mean(ii, jj);
    }
    betas[j] = detail::solve_least_squares(xtwx, xtwz);

    double accum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      const double wi = wj(ii);
      const double r = moments.mean(ii, jj) - design.row(ii).dot(betas[j]);
      accum += wi * (r * r + moments.variance(ii, jj));
    }
    variances[j] = accum / total;
    if (!(variances[j] > 0.0)) {
      throw std::runtime_error("m_step: degenerate variance in component " +
                               std::to_string(j + 1));
    }
  }
  const auto perm = enforce_intercept_ordering(weights, betas, variances);
  if (permutation_out != nullptr) *permutation_out = perm;
  return MixtureParams(std::move(weights), std::move(betas), std::move(variances));
}

namespace detail {

inline double max_relative_change(const MixtureParams& a, const MixtureParams& b) {
  const auto flat = [](const MixtureParams& p) {
    std::vector<double> v;
    for (std::size_t j = 0; j < p.K(); ++j) v.push_back(p.weight(j));
    for (std::size_t j = 0; j < p.K(); ++j) {
      for (Eigen::Index c = 0; c < p.dim(); ++c) v.push_back(p.beta(j)(c));
    }
    for (std::size_t j = 0; j < p.K(); ++j) v.push_back(p.variance(j));
    return v;
  };
  const auto va = flat(a);
  const auto vb = flat(b);
  double worst = 0.0;
  for (std::size_t q = 0; q < va.size(); ++q) {
    worst = std::max(worst, std::abs(vb[q] - va[q]) / (std::abs(va[q]) + 1e-8));
  }
  return worst;
}

inline EmResult run_em_single(const SurvivalDataset& data,
                              const MixtureParams& start,
                              const EmConfig& config) {
  const Eigen::MatrixXd design = data.design_matrix();
  MixtureParams params = start;

  EmResult result{params, 0, false, {}};
  for (long it = 1; it <= config.max_iterations; ++it) {
    const Eigen::MatrixXd w = e_step_responsibilities(data, design, params);
    const ImputedMoments moments = e_step_impute(data, design, params);
    MixtureParams next = m_step(data, w, moments, design);
    const double change = max_relative_change(params, next);
    params = std::move(next);
    result.loglik_trajectory.push_back(observed_data_loglik(data, params));
    result.iterations = it;
    if (change < config.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.params = params;
  return result;
}

}  // namespace detail

/// Censored-data EM. Each iteration computes survival-aware responsibilities
/// and per-component truncated-normal moments for the censored records, then
/// takes the weighted maximization step; stops when the largest relative
/// parameter change drops below the tolerance. Non-convergence is reported
/// via the flag, component collapse as an error.
inline EmResult run_em(const SurvivalDataset& data, std::size_t k,
                       const EmConfig& config) {
  config.validate();
  const MixtureParams init_params =
      config.init ? *config.init : quantile_split_init(data, k).first;
  if (init_params.K() != k) {
    throw std::invalid_argument("run_em: init has wrong component count");
  }
  EmResult best = detail::run_em_single(data, init_params, config);

  RngStream rng(config.seed, 1);
  for (int s = 0; s < config.extra_starts; ++s) {
    // Perturb the deterministic start; keep the intercept order valid.
    std::vector<double> weights = init_params.weights();
    std::vector<Eigen::VectorXd> betas = init_params.coefficients();
    std::vector<double> variances = init_params.variances();
    for (std::size_t j = 0; j < k; ++j) {
      betas[j](0) += 0.25 * rng.normal();
      variances[j] *= std::exp(0.5 * rng.normal());
    }
    enforce_intercept_ordering(weights, betas, variances);
    try {
      EmResult cand = detail::run_em_single(
          data, MixtureParams(weights, betas, variances), config);
      if (!cand.loglik_trajectory.empty() && !best.loglik_trajectory.empty() &&
          cand.loglik_trajectory.back() > best.loglik_trajectory.back()) {
        best = cand;
      }
    } catch (const std::runtime_error&) {
      // A collapsed randomized start is discarded; the deterministic start
      // already produced a result.
    }
  }
  return best;
}

/// Result JSON: params (parameter JSON), iterations, converged,
/// loglik_trajectory.
inline nlohmann::json em_result_to_json(const EmResult& r) {
  nlohmann::json j;
  j["params"] = params_to_json(r.params);
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["loglik_trajectory"] = r.loglik_trajectory;
  return j;
}

inline void save_em_result_json(const EmResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << em_result_to_json(r).dump(2) << "\n";
}

}  // namespace survmix
