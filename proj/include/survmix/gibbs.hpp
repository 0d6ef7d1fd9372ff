// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <map>
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

/// Chain settings. Defaults follow the reference setup: 20,000 sweeps with the
/// first 10,000 discarded, thinned by 10 so the retained draws are close to
/// independent (effective size near the retained count).
struct GibbsConfig {
  long iterations = 20000;
  long burn_in = 10000;
  long thin = 10;
  std::uint64_t seed = 1;
  std::size_t K = 2;
  /// Optional explicit starting state; the deterministic quantile split is
  /// used when absent.
  std::optional<std::pair<MixtureParams, std::vector<int>>> init;

  long retained() const { return (iterations - burn_in) / thin; }

  void validate() const {
    if (iterations <= 0) throw std::invalid_argument("GibbsConfig: iterations must be > 0");
    if (burn_in < 0 || burn_in >= iterations) {
      throw std::invalid_argument("GibbsConfig: burn_in must lie in [0, iterations)");
    }
    if (thin <= 0) throw std::invalid_argument("GibbsConfig: thin must be > 0");
    if (retained() < 100) {
      throw std::invalid_argument(
          "GibbsConfig: (iterations - burn_in)/thin must retain at least 100 draws");
    }
    if (K < 1) throw std::invalid_argument("GibbsConfig: K must be >= 1");
  }
};

/// Thinned post-burn-in snapshots of the chain plus per-snapshot allocation
/// counts.
struct PosteriorDraws {
  std::vector<long> iters;
  std::vector<MixtureParams> draws;
  std::vector<std::vector<int>> counts;

  std::size_t M() const { return draws.size(); }
  std::size_t K() const { return draws.empty() ? 0 : draws[0].K(); }
  Eigen::Index dim() const { return draws.empty() ? 0 : draws[0].dim(); }
};

// ---------------------------------------------------------------------------
// Full-conditional steps (Appendix-style conjugate updates)
// ---------------------------------------------------------------------------

/// Samples a component label for every record. Events use the categorical
/// posterior with mass proportional to eta_j * N(y_i | x_i' beta_j, sigma2_j);
/// censored records use the marginal mass eta_j * S_j(y_i) with the latent
/// log-time integrated out (a collapsed step, which avoids the imputation
/// feeding back into its own allocation).
inline std::vector<int> step_allocations(const SurvivalDataset& data,
                                         const Eigen::MatrixXd& design,
                                         const MixtureParams& params,
                                         RngStream& rng) {
  const std::size_t n = data.n();
  const std::size_t k = params.K();
  std::vector<int> labels(n, 0);
  if (k == 1) return labels;
  Eigen::MatrixXd mu(design.rows(), k);
  for (std::size_t j = 0; j < k; ++j) {
    mu.col(static_cast<Eigen::Index>(j)) = design * params.beta(j);
  }
  std::vector<double> probs(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = std::log(data[i].time);
    const auto murow = mu.row(static_cast<Eigen::Index>(i));
    if (data[i].status == 1) {
      responsibilities_row(y, murow, params, probs.data());
    } else {
      censored_responsibilities_row(y, murow, params, probs.data());
    }
    labels[i] = sample_categorical(probs, rng);
  }
  return labels;
}

/// Dirichlet update for the weights: eta | counts ~ Dirichlet(alpha_j + n_j).
inline std::vector<double> step_weights(const std::vector<int>& counts,
                                        const std::vector<double>& alpha,
                                        RngStream& rng) {
  if (counts.size() != alpha.size()) {
    throw std::invalid_argument("step_weights: size mismatch");
  }
  std::vector<double> conc(alpha.size());
  for (std::size_t j = 0; j < alpha.size(); ++j) conc[j] = alpha[j] + counts[j];
  return sample_dirichlet(conc, rng);
}

/// Data augmentation: every censored record gets a fresh latent log-time drawn
/// from its component's normal, truncated to [log t_i, inf). Events keep
/// z_i = log t_i and consume no randomness.
inline std::vector<double> step_augment(const SurvivalDataset& data,
                                        const std::vector<int>& allocations,
                                        const MixtureParams& params,
                                        RngStream& rng) {
  std::vector<double> z(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double logt = std::log(data[i].time);
    if (data[i].status == 1) {
      z[i] = logt;
      continue;
    }
    const int j = allocations[i];
    const Eigen::VectorXd& beta = params.beta(static_cast<std::size_t>(j));
    double mu = beta(0);
    for (std::size_t c = 0; c < data.p(); ++c) {
      mu += beta(static_cast<Eigen::Index>(c) + 1) * data[i].covariates[c];
    }
    z[i] = sample_truncated_normal(mu, params.variance(static_cast<std::size_t>(j)),
                                   logt, kInf, rng);
  }
  return z;
}

/// Precision update per component: phi_j ~ Gamma(a_j + n_j/2, b_j + SSR_j/2)
/// with residuals taken against the current coefficients; empty components
/// fall back to their prior. Returns variances sigma2_j = 1/phi_j.
inline std::vector<double> step_precision(
    const std::vector<double>& imputed, const std::vector<int>& allocations,
    const Eigen::MatrixXd& design,
    const std::vector<Eigen::VectorXd>& coefficients, const PriorSpec& prior,
    RngStream& rng) {
  const std::size_t k = coefficients.size();
  std::vector<double> ssr(k, 0.0);
  std::vector<long> nj(k, 0);
  for (std::size_t i = 0; i < imputed.size(); ++i) {
    const std::size_t j = static_cast<std::size_t>(allocations[i]);
    const double r =
        imputed[i] -
        design.row(static_cast<Eigen::Index>(i)).dot(coefficients[j]);
    ssr[j] += r * r;
    ++nj[j];
  }
  std::vector<double> variances(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double shape = prior.a[j] + 0.5 * static_cast<double>(nj[j]);
    const double rate = prior.b[j] + 0.5 * ssr[j];
    const double phi = std::max(sample_gamma(shape, rate, rng), 1e-300);
    variances[j] = 1.0 / phi;
  }
  return variances;
}

/// Coefficient update per component: the Gaussian prior combines with the
/// Gaussian likelihood of the records allocated to j, giving
/// beta_j ~ N(P^{-1}(m_j/tau2_j + phi_j X_j'z_j), P) with
/// P = I/tau2_j + phi_j X_j'X_j. Empty components draw from the prior.
inline std::vector<Eigen::VectorXd> step_coefficients(
    const std::vector<double>& imputed, const std::vector<int>& allocations,
    const Eigen::MatrixXd& design, const std::vector<double>& variances,
    const PriorSpec& prior, RngStream& rng) {
  const std::size_t k = variances.size();
  const Eigen::Index d = design.cols();
  std::vector<Eigen::MatrixXd> xtx(k, Eigen::MatrixXd::Zero(d, d));
  std::vector<Eigen::VectorXd> xtz(k, Eigen::VectorXd::Zero(d));
  std::vector<long> nj(k, 0);
  for (std::size_t i = 0; i < imputed.size(); ++i) {
    const std::size_t j = static_cast<std::size_t>(allocations[i]);
    const auto row = design.row(static_cast<Eigen::Index>(i));
    xtx[j].noalias() += row.transpose() * row;
    xtz[j].noalias() += row.transpose() * imputed[i];
    ++nj[j];
  }
  std::vector<Eigen::VectorXd> betas(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double prior_prec = 1.0 / prior.tau2[j];
    if (nj[j] == 0) {
      Eigen::VectorXd draw(d);
      const double sd = std::sqrt(prior.tau2[j]);
      for (Eigen::Index c = 0; c < d; ++c) draw(c) = prior.m[j](c) + sd * rng.normal();
      betas[j] = draw;
      continue;
    }
    const double phi = 1.0 / variances[j];
    Eigen::MatrixXd precision = phi * xtx[j];
    precision.diagonal().array() += prior_prec;
    const Eigen::VectorXd rhs = prior_prec * prior.m[j] + phi * xtz[j];
    const Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("step_coefficients: ill-conditioned precision");
    }
    const Eigen::VectorXd mean = llt.solve(rhs);
    Eigen::VectorXd z(d);
    for (Eigen::Index c = 0; c < d; ++c) z(c) = rng.normal();
    betas[j] = mean + llt.matrixU().solve(z);
  }
  return betas;
}

// ---------------------------------------------------------------------------
// Chain driver
// ---------------------------------------------------------------------------

/// Runs the data-augmented Gibbs sampler: each sweep samples allocations,
/// weights, latent log-times for the censored records, precisions and
/// coefficients, then restores the ascending-intercept labeling. Identical
/// inputs (dataset, prior, config) replay bit-identically.
inline PosteriorDraws run_gibbs(const SurvivalDataset& data,
                                const PriorSpec& prior,
                                const GibbsConfig& config) {
  config.validate();
  prior.validate(static_cast<Eigen::Index>(data.p()) + 1);
  if (prior.K() != config.K) {
    throw std::invalid_argument("run_gibbs: prior and config disagree on K");
  }

  const Eigen::MatrixXd design = data.design_matrix();
  const std::vector<double> logt = data.log_times();
  const std::size_t k = config.K;

  auto start = config.init ? *config.init : quantile_split_init(data, k);
  if (start.first.K() != k || start.second.size() != data.n()) {
    throw std::invalid_argument("run_gibbs: initial state has wrong shape");
  }
  // Canonicalize the starting labels before any randomness is consumed, so a
  // relabeled initial state replays the exact same chain.
  std::vector<double> weights = start.first.weights();
  std::vector<Eigen::VectorXd> betas = start.first.coefficients();
  std::vector<double> variances = start.first.variances();
  std::vector<int> labels = start.second;
  enforce_intercept_ordering(weights, betas, variances, &labels);

  std::vector<double> z;
  RngStream rng(config.seed, 0);

  PosteriorDraws out;
  out.iters.reserve(config.retained());
  out.draws.reserve(config.retained());
  out.counts.reserve(config.retained());

  std::vector<int> counts(k, 0);
  for (long sweep = 1; sweep <= config.iterations; ++sweep) {
    MixtureParams params(weights, betas, variances);
    labels = step_allocations(data, design, params, rng);

    std::fill(counts.begin(), counts.end(), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];

    weights = step_weights(counts, prior.alpha, rng);
    z = step_augment(data, labels, params, rng);
    variances = step_precision(z, labels, design, betas, prior, rng);
    betas = step_coefficients(z, labels, design, variances, prior, rng);
    enforce_intercept_ordering(weights, betas, variances, &labels);
    std::fill(counts.begin(), counts.end(), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];

    for (std::size_t i = 0; i < data.n(); ++i) {
      if (data[i].status == 0 && z[i] < logt[i]) {
        throw std::logic_error("run_gibbs: augmentation violated truncation");
      }
    }

    if (sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0) {
      out.iters.push_back(sweep);
      out.draws.emplace_back(weights, betas, variances);
      out.counts.push_back(counts);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chain diagnostics and summaries
// ---------------------------------------------------------------------------

/// Effective sample size M / (1 + 2 sum rho_k), truncating the autocorrelation
/// sum with Geyer's initial monotone positive-sequence rule. A zero-variance
/// chain is reported as 0 (degenerate).
inline double effective_sample_size(const std::vector<double>& chain) {
  const std::size_t m = chain.size();
  if (m < 10) {
    throw std::invalid_argument("effective_sample_size: chain too short");
  }
  const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) /
                      static_cast<double>(m);
  std::vector<double> centered(m);
  for (std::size_t i = 0; i < m; ++i) centered[i] = chain[i] - mean;
  const auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < m; ++i) s += centered[i] * centered[i + lag];
    return s / static_cast<double>(m);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return 0.0;

  double tau = 0.0;  // running 2 * sum of paired autocorrelations
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t lag = 0; lag + 1 < m; lag += 2) {
    double pair = (autocov(lag) + autocov(lag + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);  // monotone adjustment
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau -= 1.0;  // the lag-0 term was counted twice
  tau = std::max(tau, 1e-12);
  return static_cast<double>(m) / tau;
}

/// Type-7 empirical quantile (linear interpolation between order statistics).
inline double quantile_type7(std::vector<double> sorted_values, double p) {
  std::sort(sorted_values.begin(), sorted_values.end());
  const std::size_t n = sorted_values.size();
  if (n == 0) throw std::invalid_argument("quantile of empty sample");
  const double h = (static_cast<double>(n) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

struct ParamSummary {
  double mean = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
  double ess = 0.0;
};

/// Per-parameter summaries keyed by name (eta_j, beta_j_c, sigma2_j; 1-based
/// component index, 0-based coefficient index).
struct PosteriorSummary {
  std::vector<std::pair<std::string, ParamSummary>> entries;

  const ParamSummary& at(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.first == name) return e.second;
    }
    throw std::out_of_range("no summary for parameter: " + name);
  }
};

inline std::vector<std::string> parameter_names(std::size_t k, Eigen::Index dim) {
  std::vector<std::string> names;
  for (std::size_t j = 1; j <= k; ++j) names.push_back("eta_" + std::to_string(j));
  for (std::size_t j = 1; j <= k; ++j) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      names.push_back("beta_" + std::to_string(j) + "_" + std::to_string(c));
    }
  }
  for (std::size_t j = 1; j <= k; ++j) names.push_back("sigma2_" + std::to_string(j));
  return names;
}

/// Flattens one draw in the order produced by parameter_names().
inline std::vector<double> flatten_draw(const MixtureParams& p) {
  std::vector<double> v;
  v.reserve(p.K() * (2 + static_cast<std::size_t>(p.dim())));
  for (std::size_t j = 0; j < p.K(); ++j) v.push_back(p.weight(j));
  for (std::size_t j = 0; j < p.K(); ++j) {
    for (Eigen::Index c = 0; c < p.dim(); ++c) v.push_back(p.beta(j)(c));
  }
  for (std::size_t j = 0; j < p.K(); ++j) v.push_back(p.variance(j));
  return v;
}

inline PosteriorSummary posterior_summary(const PosteriorDraws& draws) {
  if (draws.M() < 100) {
    throw std::invalid_argument("posterior_summary: need at least 100 draws");
  }
  const auto names = parameter_names(draws.K(), draws.dim());
  const std::size_t m = draws.M();
  std::vector<std::vector<double>> chains(names.size(), std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto flat = flatten_draw(draws.draws[i]);
    for (std::size_t q = 0; q < flat.size(); ++q) chains[q][i] = flat[q];
  }
  PosteriorSummary out;
  for (std::size_t q = 0; q < names.size(); ++q) {
    ParamSummary s;
    s.mean = std::accumulate(chains[q].begin(), chains[q].end(), 0.0) /
             static_cast<double>(m);
    s.lo95 = quantile_type7(chains[q], 0.025);
    s.hi95 = quantile_type7(chains[q], 0.975);
    s.ess = effective_sample_size(chains[q]);
    out.entries.emplace_back(names[q], s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Draws CSV: header iter,eta_*,beta_j_c...,sigma2_*,n_*; one retained draw
/// per row, shortest round-trip doubles.
inline void save_draws_csv(const PosteriorDraws& draws, const std::string& path) {
  if (draws.M() == 0) throw std::invalid_argument("save_draws_csv: no draws");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "iter";
  for (const auto& name : parameter_names(draws.K(), draws.dim())) out << "," << name;
  for (std::size_t j = 1; j <= draws.K(); ++j) out << ",n_" << j;
  out << "\n";
  for (std::size_t i = 0; i < draws.M(); ++i) {
    out << draws.iters[i];
    for (double v : flatten_draw(draws.draws[i])) {
      out << "," << detail::format_double(v);
    }
    for (int c : draws.counts[i]) out << "," << c;
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline PosteriorDraws load_draws_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open draws: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty draws file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  std::size_t k = 0;
  Eigen::Index dim = 0;
  for (const auto& h : header) {
    if (h.rfind("eta_", 0) == 0) ++k;
    if (h.rfind("beta_1_", 0) == 0) ++dim;
  }
  if (k == 0 || dim == 0 || header.size() != 1 + k * (2 + static_cast<std::size_t>(dim)) + k) {
    throw std::runtime_error("malformed draws header: " + path);
  }
  PosteriorDraws draws;
  std::size_t rownum = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw std::runtime_error("malformed draws row " + std::to_string(rownum));
    }
    std::size_t pos = 0;
    draws.iters.push_back(static_cast<long>(detail::parse_double(f[pos++], "iter", rownum)));
    std::vector<double> weights(k);
    for (std::size_t j = 0; j < k; ++j) {
      weights[j] = detail::parse_double(f[pos++], "eta", rownum);
    }
    std::vector<Eigen::VectorXd> betas(k, Eigen::VectorXd(dim));
    for (std::size_t j = 0; j < k; ++j) {
      for (Eigen::Index c = 0; c < dim; ++c) {
        betas[j](c) = detail::parse_double(f[pos++], "beta", rownum);
      }
    }
    std::vector<double> variances(k);
    for (std::size_t j = 0; j < k; ++j) {
      variances[j] = detail::parse_double(f[pos++], "sigma2", rownum);
    }
    std::vector<int> counts(k);
    for (std::size_t j = 0; j < k; ++j) {
      counts[j] = static_cast<int>(detail::parse_double(f[pos++], "n_j", rownum));
    }
    draws.draws.emplace_back(std::move(weights), std::move(betas), std::move(variances));
    draws.counts.push_back(std::move(counts));
    ++rownum;
  }
  return draws;
}

/// Summary JSON keyed by parameter name with mean/lo95/hi95/ess.
inline nlohmann::json summary_to_json(const PosteriorSummary& summary) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, s] : summary.entries) {
    j[name] = {{"mean", s.mean}, {"lo95", s.lo95}, {"hi95", s.hi95}, {"ess", s.ess}};
  }
  return j;
}

inline void save_summary_json(const PosteriorSummary& summary,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << summary_to_json(summary).dump(2) << "\n";
}

}  // namespace survmix
