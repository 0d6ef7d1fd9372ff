// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace survmix {

/// Parameters of a K-component log-normal mixture survival regression:
/// mixing weights, per-component regression coefficients (intercept first)
/// and per-component variances on the log-time scale.
///
/// Construction validates the simplex and positivity constraints and the
/// identifiability convention that component intercepts ascend.
class MixtureParams {
 public:
  MixtureParams(std::vector<double> weights,
                std::vector<Eigen::VectorXd> coefficients,
                std::vector<double> variances)
      : weights_(std::move(weights)),
        coefficients_(std::move(coefficients)),
        variances_(std::move(variances)) {
    const std::size_t k = weights_.size();
    if (k == 0) throw std::invalid_argument("MixtureParams: K must be >= 1");
    if (coefficients_.size() != k || variances_.size() != k) {
      throw std::invalid_argument("MixtureParams: component count mismatch");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) {
        throw std::invalid_argument("MixtureParams: negative weight");
      }
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("MixtureParams: weights must sum to 1");
    }
    const Eigen::Index d = coefficients_[0].size();
    if (d < 1) throw std::invalid_argument("MixtureParams: empty coefficients");
    for (std::size_t j = 0; j < k; ++j) {
      if (coefficients_[j].size() != d) {
        throw std::invalid_argument("MixtureParams: coefficient length mismatch");
      }
      if (!(variances_[j] > 0.0) || !std::isfinite(variances_[j])) {
        throw std::invalid_argument("MixtureParams: variances must be positive");
      }
      if (j > 0 && coefficients_[j](0) < coefficients_[j - 1](0)) {
        throw std::invalid_argument(
            "MixtureParams: component intercepts must be ascending");
      }
    }
  }

  std::size_t K() const { return weights_.size(); }
  /// Coefficient dimension p+1 (intercept included).
  Eigen::Index dim() const { return coefficients_[0].size(); }

  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& coefficients() const {
    return coefficients_;
  }
  const std::vector<double>& variances() const { return variances_; }

  double weight(std::size_t j) const { return weights_[j]; }
  const Eigen::VectorXd& beta(std::size_t j) const { return coefficients_[j]; }
  double variance(std::size_t j) const { return variances_[j]; }

  bool operator==(const MixtureParams& o) const {
    return weights_ == o.weights_ && variances_ == o.variances_ &&
           coefficients_.size() == o.coefficients_.size() &&
           std::equal(coefficients_.begin(), coefficients_.end(),
                      o.coefficients_.begin(),
                      [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
                        return a.size() == b.size() && a == b;
                      });
  }

 private:
  std::vector<double> weights_;
  std::vector<Eigen::VectorXd> coefficients_;
  std::vector<double> variances_;
};

/// Sorts components by ascending intercept (stable, so ties keep their
/// pre-permutation order) and applies the same permutation to the weight,
/// coefficient and variance arrays and, when given, to allocation labels.
/// Returns the permutation: slot j holds the old index now occupying j.
inline std::vector<int> enforce_intercept_ordering(
    std::vector<double>& weights, std::vector<Eigen::VectorXd>& coefficients,
    std::vector<double>& variances, std::vector<int>* allocations = nullptr) {
  const int k = static_cast<int>(weights.size());
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    return coefficients[a](0) < coefficients[b](0);
  });
  std::vector<double> w(k), v(k);
  std::vector<Eigen::VectorXd> c(k);
  std::vector<int> inverse(k);
  for (int j = 0; j < k; ++j) {
    w[j] = weights[perm[j]];
    c[j] = coefficients[perm[j]];
    v[j] = variances[perm[j]];
    inverse[perm[j]] = j;
  }
  weights = std::move(w);
  coefficients = std::move(c);
  variances = std::move(v);
  if (allocations != nullptr) {
    for (int& a : *allocations) a = inverse[a];
  }
  return perm;
}

/// Independent prior hyperparameters: Dirichlet(alpha) over weights,
/// N(m_j, tau2_j I) over coefficients and Gamma(a_j, b_j) over precisions
/// (rate parameterization).
struct PriorSpec {
  std::vector<double> alpha;
  std::vector<Eigen::VectorXd> m;
  std::vector<double> tau2;
  std::vector<double> a;
  std::vector<double> b;

  std::size_t K() const { return alpha.size(); }

  void validate(Eigen::Index dim) const {
    const std::size_t k = alpha.size();
    if (k == 0) throw std::invalid_argument("PriorSpec: K must be >= 1");
    if (m.size() != k || tau2.size() != k || a.size() != k || b.size() != k) {
      throw std::invalid_argument("PriorSpec: component count mismatch");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (!(alpha[j] > 0.0) || !(tau2[j] > 0.0) || !(a[j] > 0.0) ||
          !(b[j] > 0.0)) {
        throw std::invalid_argument("PriorSpec: hyperparameters must be > 0");
      }
      if (m[j].size() != dim) {
        throw std::invalid_argument("PriorSpec: prior mean length mismatch");
      }
    }
  }

  /// The vague default: alpha_j = 2, m_j = 0, tau2_j = 100, a_j = b_j = 0.01.
  static PriorSpec vague(std::size_t k, Eigen::Index dim) {
    PriorSpec p;
    p.alpha.assign(k, 2.0);
    p.m.assign(k, Eigen::VectorXd::Zero(dim));
    p.tau2.assign(k, 100.0);
    p.a.assign(k, 0.01);
    p.b.assign(k, 0.01);
    return p;
  }
};

/// Latent state of the augmented model: component labels (0-based) plus the
/// imputed log-times z (z_i = log t_i for every observed event; z_i >= log t_i
/// for every censored record).
struct LatentState {
  std::vector<int> allocations;
  std::vector<double> imputed;
};

// --- parameter JSON (keys fixed: K, weights, coefficients, variances) ---

inline nlohmann::json params_to_json(const MixtureParams& p) {
  nlohmann::json j;
  j["K"] = p.K();
  j["weights"] = p.weights();
  std::vector<std::vector<double>> coefs;
  for (const auto& beta : p.coefficients()) {
    coefs.emplace_back(beta.data(), beta.data() + beta.size());
  }
  j["coefficients"] = coefs;
  j["variances"] = p.variances();
  return j;
}

inline MixtureParams params_from_json(const nlohmann::json& j) {
  const auto weights = j.at("weights").get<std::vector<double>>();
  const auto coefs = j.at("coefficients").get<std::vector<std::vector<double>>>();
  const auto variances = j.at("variances").get<std::vector<double>>();
  if (j.contains("K") && j.at("K").get<std::size_t>() != weights.size()) {
    throw std::invalid_argument("params JSON: K does not match weights length");
  }
  std::vector<Eigen::VectorXd> betas;
  for (const auto& c : coefs) {
    betas.push_back(Eigen::Map<const Eigen::VectorXd>(c.data(),
                                                      static_cast<Eigen::Index>(c.size())));
  }
  return MixtureParams(weights, std::move(betas), variances);
}

inline void save_params_json(const MixtureParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << params_to_json(p).dump(2) << "\n";
}

inline MixtureParams load_params_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open params: " + path);
  nlohmann::json j;
  in >> j;
  return params_from_json(j);
}

}  // namespace survmix
