#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vaxsignal/data_model.hpp"

namespace vaxsignal {

enum class PriorMode : std::uint8_t { DPM, IL };

// Prior configuration. Normals are (mean, precision); gammas are (shape, rate).
struct Hyperparams {
  int K = 5;
  double tau_alpha = 0.01;
  double tau_0 = 0.01;
  double f_0 = 3.0;
  double a_0 = 1.0;
  double b_0 = 1.0;
  double r_tau = 3.0;
  double r_lambda = 0.03;
  double lambda_0 = 0.03;
  PriorMode prior_mode = PriorMode::DPM;
  double il_precision = 0.1;

  static Hyperparams dpm() { return {}; }
  static Hyperparams il_informative();
  static Hyperparams il_vague();

  bool is_dpm() const noexcept { return prior_mode == PriorMode::DPM; }
  void validate() const;
};

// Every latent quantity of the model. Labels `z` are zero-based.
struct ModelState {
  std::size_t num_covariates = 0;  // P
  std::vector<double> alpha;       // J x P, row-major
  std::vector<double> beta;        // J
  std::vector<int> z;              // J
  std::vector<double> v;           // K-1 stick proportions
  std::vector<double> pi;          // K
  std::vector<double> mu;          // K
  std::vector<double> tau;         // K
  double mu_base = 0.0;
  double u = 1.0;
  double lambda = 1.0;

  std::size_t num_aes() const noexcept { return beta.size(); }
  std::size_t num_components() const noexcept { return mu.size(); }
  double tau_base() const noexcept { return 1.0 / (u * u); }
  std::span<double> alpha_row(std::size_t j) { return {alpha.data() + j * num_covariates, num_covariates}; }
  std::span<const double> alpha_row(std::size_t j) const {
    return {alpha.data() + j * num_covariates, num_covariates};
  }
};

struct LogDensity {
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  double deviance = 0.0;
};

// log(1 + exp(x)) without overflow.
double log1p_exp(double x) noexcept;
double expit(double x) noexcept;
double logit(double p) noexcept;
double normal_log_density(double x, double mean, double precision) noexcept;
double gamma_log_density(double x, double shape, double rate) noexcept;
double beta_log_density(double x, double a, double b) noexcept;

// Linear predictor of AE j in stratum s.
double linear_predictor(const ModelState& state, const StratumTable& data, std::size_t j, std::size_t s);

// Binomial log-likelihood of AE j alone, without the binomial coefficients.
double ae_log_kernel(std::span<const double> alpha_row, double beta, const StratumTable& data,
                     std::size_t j);

// Full binomial log-likelihood including log C(n, y).
double log_likelihood(const ModelState& state, const StratumTable& data);
double log_prior(const ModelState& state, const Hyperparams& hyper);
LogDensity log_density(const ModelState& state, const StratumTable& data, const Hyperparams& hyper);

// Stick-breaking weights: pi_k = v_k prod_{h<k}(1 - v_h), pi_K = prod(1 - v_h).
std::vector<double> stick_to_simplex(std::span<const double> v);
// Left inverse of stick_to_simplex; requires all pi_k > 0.
std::vector<double> simplex_to_stick(std::span<const double> pi);

ModelState init_state(const StratumTable& data, const Hyperparams& hyper, std::uint64_t seed);

// Throws ContractViolation if the state does not fit the data or hyperparameters.
void check_state(const ModelState& state, const StratumTable& data, const Hyperparams& hyper);

}  // namespace vaxsignal
