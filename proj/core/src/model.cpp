#include "vaxsignal/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "vaxsignal/error.hpp"
#include "vaxsignal/random.hpp"

namespace vaxsignal {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Hyperparams Hyperparams::il_informative() {
  Hyperparams h;
  h.prior_mode = PriorMode::IL;
  h.il_precision = 0.1;
  return h;
}

Hyperparams Hyperparams::il_vague() {
  Hyperparams h;
  h.prior_mode = PriorMode::IL;
  h.il_precision = 0.01;
  return h;
}

void Hyperparams::validate() const {
  auto positive = [](double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(tau_alpha, "tau_alpha");
  if (prior_mode == PriorMode::DPM) {
    if (K < 2) throw ConfigError("model.K must be at least 2 in DPM mode");
    positive(tau_0, "tau_0");
    positive(f_0, "f_0");
    positive(a_0, "a_0");
    positive(b_0, "b_0");
    positive(r_tau, "r_tau");
    positive(r_lambda, "r_lambda");
    positive(lambda_0, "lambda_0");
  } else {
    positive(il_precision, "il_precision");
  }
}

double log1p_exp(double x) noexcept {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double expit(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

double normal_log_density(double x, double mean, double precision) noexcept {
  const double d = x - mean;
  return 0.5 * (std::log(precision) - std::log(2.0 * std::numbers::pi)) - 0.5 * precision * d * d;
}

double gamma_log_density(double x, double shape, double rate) noexcept {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double beta_log_density(double x, double a, double b) noexcept {
  if (!(x > 0.0 && x < 1.0)) return kNegInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

double linear_predictor(const ModelState& state, const StratumTable& data, std::size_t j, std::size_t s) {
  const auto& st = data.strata[s];
  const auto row = state.alpha_row(j);
  double eta = st.vaccine ? state.beta[j] : 0.0;
  for (std::size_t p = 0; p < row.size(); ++p) eta += row[p] * st.x[p];
  return eta;
}

double ae_log_kernel(std::span<const double> alpha_row, double beta, const StratumTable& data,
                     std::size_t j) {
  double total = 0.0;
  for (std::size_t s = 0; s < data.num_strata(); ++s) {
    const auto& st = data.strata[s];
    if (st.n == 0) continue;
    double eta = st.vaccine ? beta : 0.0;
    for (std::size_t p = 0; p < alpha_row.size(); ++p) eta += alpha_row[p] * st.x[p];
    total += static_cast<double>(data.count(j, s)) * eta - static_cast<double>(st.n) * log1p_exp(eta);
  }
  return total;
}

double log_likelihood(const ModelState& state, const StratumTable& data) {
  const std::size_t J = data.num_aes();
  if (state.beta.size() != J || state.alpha.size() != J * data.num_covariates() ||
      state.num_covariates != data.num_covariates()) {
    throw ContractViolation("log_likelihood: state dimensions do not match the data");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < data.num_strata(); ++s) {
    const double n = static_cast<double>(data.strata[s].n);
    if (data.strata[s].n == 0) continue;
    for (std::size_t j = 0; j < J; ++j) {
      const double y = static_cast<double>(data.count(j, s));
      total += std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0);
    }
  }
  for (std::size_t j = 0; j < J; ++j) total += ae_log_kernel(state.alpha_row(j), state.beta[j], data, j);
  return total;
}

double log_prior(const ModelState& state, const Hyperparams& hyper) {
  double lp = 0.0;
  for (double a : state.alpha) lp += normal_log_density(a, 0.0, hyper.tau_alpha);
  if (!hyper.is_dpm()) {
    for (double b : state.beta) lp += normal_log_density(b, 0.0, hyper.il_precision);
    return lp;
  }
  const auto K = static_cast<std::size_t>(hyper.K);
  if (state.mu.size() != K || state.tau.size() != K || state.pi.size() != K || state.v.size() + 1 != K ||
      state.z.size() != state.beta.size()) {
    throw ContractViolation("log_prior: state is not sized for hyper.K");
  }
  if (!(state.u > 0.0 && state.u < hyper.f_0)) return kNegInf;
  const double tau_base = state.tau_base();
  for (std::size_t j = 0; j < state.beta.size(); ++j) {
    const auto k = static_cast<std::size_t>(state.z[j]);
    lp += std::log(state.pi[k]) + normal_log_density(state.beta[j], state.mu[k], state.tau[k]);
  }
  for (double vk : state.v) lp += beta_log_density(vk, hyper.a_0, hyper.b_0);
  for (std::size_t k = 0; k < K; ++k) {
    lp += normal_log_density(state.mu[k], state.mu_base, tau_base);
    lp += gamma_log_density(state.tau[k], hyper.r_tau, state.lambda);
  }
  lp += normal_log_density(state.mu_base, 0.0, hyper.tau_0);
  lp += -std::log(hyper.f_0);
  lp += gamma_log_density(state.lambda, hyper.r_lambda, hyper.lambda_0);
  return lp;
}

LogDensity log_density(const ModelState& state, const StratumTable& data, const Hyperparams& hyper) {
  LogDensity d;
  d.log_likelihood = log_likelihood(state, data);
  d.log_prior = log_prior(state, hyper);
  d.deviance = -2.0 * d.log_likelihood;
  return d;
}

std::vector<double> stick_to_simplex(std::span<const double> v) {
  std::vector<double> pi(v.size() + 1);
  double remaining = 1.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    pi[k] = v[k] * remaining;
    remaining *= 1.0 - v[k];
  }
  pi.back() = remaining;
  return pi;
}

std::vector<double> simplex_to_stick(std::span<const double> pi) {
  if (pi.empty()) return {};
  std::vector<double> v(pi.size() - 1);
  double remaining = 1.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!(pi[k] > 0.0) || !(remaining > 0.0)) throw ContractViolation("simplex_to_stick needs pi > 0");
    v[k] = pi[k] / remaining;
    remaining *= 1.0 - v[k];
  }
  return v;
}

ModelState init_state(const StratumTable& data, const Hyperparams& hyper, std::uint64_t seed) {
  hyper.validate();
  const std::size_t J = data.num_aes();
  const std::size_t P = data.num_covariates();
  if (J == 0) throw DataError("init_state: no AEs to model");
  ModelState st;
  st.num_covariates = P;
  st.alpha.assign(J * P, 0.0);
  st.beta.assign(J, 0.0);

  bool any_control = false;
  for (const auto& s : data.strata) any_control = any_control || (s.vaccine == 0 && s.n > 0);
  if (P > 0) {
    for (std::size_t j = 0; j < J; ++j) {
      double y = 0.0, n = 0.0;
      for (std::size_t s = 0; s < data.num_strata(); ++s) {
        if (any_control && data.strata[s].vaccine != 0) continue;
        y += static_cast<double>(data.count(j, s));
        n += static_cast<double>(data.strata[s].n);
      }
      st.alpha[j * P] = logit((y + 0.5) / (n + 1.0));
    }
  }

  if (hyper.is_dpm()) {
    const auto K = static_cast<std::size_t>(hyper.K);
    Rng rng(seed);
    st.z.resize(J);
    for (auto& z : st.z) z = static_cast<int>(rng.uniform_index(K));
    st.v.assign(K - 1, 0.5);
    st.pi = stick_to_simplex(st.v);
    st.mu.resize(K);
    for (std::size_t k = 0; k < K; ++k) st.mu[k] = -3.0 + 6.0 * static_cast<double>(k) / static_cast<double>(K - 1);
    st.tau.assign(K, 1.0);
    st.mu_base = 0.0;
    st.u = hyper.f_0 / 2.0;
    st.lambda = hyper.r_lambda / hyper.lambda_0;
  }
  return st;
}

void check_state(const ModelState& state, const StratumTable& data, const Hyperparams& hyper) {
  const std::size_t J = data.num_aes();
  const std::size_t P = data.num_covariates();
  if (state.num_covariates != P || state.alpha.size() != J * P || state.beta.size() != J) {
    throw ContractViolation("state regression block does not match the data");
  }
  if (!hyper.is_dpm()) return;
  const auto K = static_cast<std::size_t>(hyper.K);
  if (state.z.size() != J || state.mu.size() != K || state.tau.size() != K || state.pi.size() != K ||
      state.v.size() + 1 != K) {
    throw ContractViolation("state mixture block is not sized for K");
  }
  for (int z : state.z) {
    if (z < 0 || static_cast<std::size_t>(z) >= K) throw ContractViolation("label out of range");
  }
  for (double t : state.tau) {
    if (!(t > 0.0)) throw ContractViolation("component precision must be positive");
  }
}

}  // namespace vaxsignal
