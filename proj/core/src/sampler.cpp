#include "vaxsignal/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "vaxsignal/csv.hpp"

namespace vaxsignal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool accept(double log_ratio, Rng& rng) { return std::log(rng.uniform()) <= log_ratio; }

double beta_prior_log(double b, const ModelState& st, const Hyperparams& hyper, std::size_t j) {
  if (!hyper.is_dpm()) return -0.5 * hyper.il_precision * b * b;
  const auto k = static_cast<std::size_t>(st.z[j]);
  const double d = b - st.mu[k];
  return -0.5 * st.tau[k] * d * d;
}

std::vector<std::size_t> component_counts(const ModelState& st) {
  std::vector<std::size_t> m(st.mu.size(), 0);
  for (int z : st.z) ++m[static_cast<std::size_t>(z)];
  return m;
}

}  // namespace

void ChainConfig::validate() const {
  if (n_chains < 1) throw ConfigError("chains.n_chains must be at least 1");
  if (n_burnin < 0) throw ConfigError("chains.n_burnin must be non-negative");
  if (thin < 1) throw ConfigError("chains.thin must be at least 1");
  if (n_retained < 1) throw ConfigError("chains.n_retained must be at least 1");
  if (!(adapt.target_accept > 0.0 && adapt.target_accept < 1.0)) {
    throw ConfigError("chains.target_accept must lie in (0, 1)");
  }
  if (adapt.adapt_window < 1) throw ConfigError("chains.adapt_window must be at least 1");
  if (!(initial_step >= 0.0) || !(initial_u_step >= 0.0)) throw ConfigError("step sizes must be non-negative");
  if (threads < 1) throw ConfigError("threads must be at least 1");
}

int ChainConfig::adapt_until() const { return std::min(adapt.adapt_until.value_or(n_burnin), n_burnin); }

void AcceptanceTally::reset() {
  std::fill(accepted.begin(), accepted.end(), 0);
  std::fill(proposed.begin(), proposed.end(), 0);
  u_accepted = u_proposed = 0;
}

double AcceptanceTally::rate(std::size_t index) const {
  return proposed[index] ? static_cast<double>(accepted[index]) / static_cast<double>(proposed[index]) : 0.0;
}

double AcceptanceTally::u_rate() const {
  return u_proposed ? static_cast<double>(u_accepted) / static_cast<double>(u_proposed) : 0.0;
}

void update_regression(ModelState& st, const StratumTable& data, const Hyperparams& hyper,
                       const StepSizes& steps, Rng& rng, AcceptanceTally* tally) {
  const std::size_t J = data.num_aes();
  const std::size_t S = data.num_strata();
  const std::size_t P = data.num_covariates();
  std::vector<double> eta(S), soft(S), eta_new(S), soft_new(S);

  for (std::size_t j = 0; j < J; ++j) {
    auto alpha = st.alpha_row(j);
    for (std::size_t s = 0; s < S; ++s) {
      const auto& stratum = data.strata[s];
      double e = stratum.vaccine ? st.beta[j] : 0.0;
      for (std::size_t p = 0; p < P; ++p) e += alpha[p] * stratum.x[p];
      eta[s] = e;
      soft[s] = log1p_exp(e);
    }
    for (std::size_t c = 0; c <= P; ++c) {
      const bool is_beta = c == P;
      const double step = steps.coef[j * steps.stride + c];
      const double delta = step * rng.standard_normal();
      const double current = is_beta ? st.beta[j] : alpha[c];
      const double proposal = current + delta;

      double diff = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        const auto& stratum = data.strata[s];
        const double xs = is_beta ? static_cast<double>(stratum.vaccine) : stratum.x[c];
        eta_new[s] = eta[s] + delta * xs;
        if (stratum.n == 0 || xs == 0.0) {
          soft_new[s] = soft[s];
          continue;
        }
        soft_new[s] = log1p_exp(eta_new[s]);
        diff += static_cast<double>(data.count(j, s)) * delta * xs -
                static_cast<double>(stratum.n) * (soft_new[s] - soft[s]);
      }
      if (is_beta) {
        diff += beta_prior_log(proposal, st, hyper, j) - beta_prior_log(current, st, hyper, j);
      } else {
        diff += -0.5 * hyper.tau_alpha * (proposal * proposal - current * current);
      }
      const bool ok = accept(diff, rng);
      if (tally) {
        ++tally->proposed[j * tally->stride + c];
        if (ok) ++tally->accepted[j * tally->stride + c];
      }
      if (ok) {
        if (is_beta) st.beta[j] = proposal;
        else alpha[c] = proposal;
        std::swap(eta, eta_new);
        std::swap(soft, soft_new);
      }
    }
    if (!steps.ridge || P == 0) continue;
    // Joint move alpha_0 + d, beta - d: target-stratum logits of an intercept design stay fixed.
    {
      const std::size_t c = P + 1;
      const double delta = steps.coef[j * steps.stride + c] * rng.standard_normal();
      double diff = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        const auto& stratum = data.strata[s];
        const double xs = stratum.x[0] - static_cast<double>(stratum.vaccine);
        eta_new[s] = eta[s] + delta * xs;
        if (stratum.n == 0 || xs == 0.0) {
          soft_new[s] = soft[s];
          continue;
        }
        soft_new[s] = log1p_exp(eta_new[s]);
        diff += static_cast<double>(data.count(j, s)) * delta * xs -
                static_cast<double>(stratum.n) * (soft_new[s] - soft[s]);
      }
      const double a0 = alpha[0] + delta;
      const double b = st.beta[j] - delta;
      diff += -0.5 * hyper.tau_alpha * (a0 * a0 - alpha[0] * alpha[0]);
      diff += beta_prior_log(b, st, hyper, j) - beta_prior_log(st.beta[j], st, hyper, j);
      const bool ok = accept(diff, rng);
      if (tally) {
        ++tally->proposed[j * tally->stride + c];
        if (ok) ++tally->accepted[j * tally->stride + c];
      }
      if (ok) {
        alpha[0] = a0;
        st.beta[j] = b;
        std::swap(eta, eta_new);
        std::swap(soft, soft_new);
      }
    }
  }
}

void update_labels(ModelState& st, Rng& rng) {
  const std::size_t K = st.mu.size();
  std::vector<double> base(K), w(K);
  for (std::size_t k = 0; k < K; ++k) {
    base[k] = st.pi[k] > 0.0 ? std::log(st.pi[k]) + 0.5 * std::log(st.tau[k]) : kNegInf;
  }
  for (std::size_t j = 0; j < st.beta.size(); ++j) {
    for (std::size_t k = 0; k < K; ++k) {
      const double d = st.beta[j] - st.mu[k];
      w[k] = base[k] - 0.5 * st.tau[k] * d * d;
    }
    st.z[j] = static_cast<int>(rng.categorical_log(w));
  }
}

void update_sticks(ModelState& st, const Hyperparams& hyper, Rng& rng) {
  const auto m = component_counts(st);
  const std::size_t K = m.size();
  std::size_t tail = 0;
  for (std::size_t k = 0; k < K; ++k) tail += m[k];
  for (std::size_t k = 0; k + 1 < K; ++k) {
    tail -= m[k];
    double v = rng.beta(hyper.a_0 + static_cast<double>(m[k]), hyper.b_0 + static_cast<double>(tail));
    st.v[k] = std::min(v, std::nextafter(1.0, 0.0));
  }
  st.pi = stick_to_simplex(st.v);
}

void update_components(ModelState& st, const Hyperparams& hyper, Rng& rng) {
  const std::size_t K = st.mu.size();
  std::vector<std::size_t> m(K, 0);
  std::vector<double> sum(K, 0.0);
  for (std::size_t j = 0; j < st.beta.size(); ++j) {
    const auto k = static_cast<std::size_t>(st.z[j]);
    ++m[k];
    sum[k] += st.beta[j];
  }
  const double tau_base = st.tau_base();
  for (std::size_t k = 0; k < K; ++k) {
    const double mk = static_cast<double>(m[k]);
    const double prec = tau_base + mk * st.tau[k];
    const double mean = (tau_base * st.mu_base + st.tau[k] * sum[k]) / prec;
    st.mu[k] = rng.normal(mean, prec);
  }
  std::vector<double> ss(K, 0.0);
  for (std::size_t j = 0; j < st.beta.size(); ++j) {
    const auto k = static_cast<std::size_t>(st.z[j]);
    const double d = st.beta[j] - st.mu[k];
    ss[k] += d * d;
  }
  for (std::size_t k = 0; k < K; ++k) {
    st.tau[k] = rng.gamma(hyper.r_tau + 0.5 * static_cast<double>(m[k]), st.lambda + 0.5 * ss[k]);
  }
}

void update_shared(ModelState& st, const Hyperparams& hyper, double u_step, Rng& rng,
                   AcceptanceTally* tally) {
  const std::size_t K = st.mu.size();
  const double Kd = static_cast<double>(K);
  {
    const double tau_base = st.tau_base();
    double sum_mu = 0.0;
    for (double m : st.mu) sum_mu += m;
    const double prec = hyper.tau_0 + Kd * tau_base;
    st.mu_base = rng.normal(tau_base * sum_mu / prec, prec);
  }
  {
    double sum_tau = 0.0;
    for (double t : st.tau) sum_tau += t;
    st.lambda = rng.gamma(hyper.r_lambda + Kd * hyper.r_tau, hyper.lambda_0 + sum_tau);
  }
  {
    double ss = 0.0;
    for (double m : st.mu) ss += (m - st.mu_base) * (m - st.mu_base);
    auto log_target = [&](double u) {
      if (!(u > 0.0 && u < hyper.f_0)) return kNegInf;
      return -Kd * std::log(u) - 0.5 * ss / (u * u);
    };
    double proposal = st.u + u_step * rng.standard_normal();
    // Reflect into [0, f_0]; the proposal stays symmetric.
    while (proposal < 0.0 || proposal > hyper.f_0) {
      if (proposal < 0.0) proposal = -proposal;
      if (proposal > hyper.f_0) proposal = 2.0 * hyper.f_0 - proposal;
    }
    const bool ok = accept(log_target(proposal) - log_target(st.u), rng);
    if (tally) {
      ++tally->u_proposed;
      if (ok) ++tally->u_accepted;
    }
    if (ok) st.u = proposal;
  }
}

Sampler::Sampler(Hyperparams hyper, ModelState initial, const ChainConfig& config)
    : hyper_(hyper),
      adapt_(config.adapt),
      state_(std::move(initial)),
      steps_(state_.num_aes(), state_.num_covariates, config.initial_step, config.initial_u_step, config.ridge_move),
      tally_(state_.num_aes(), state_.num_covariates) {}

void Sampler::sweep(const StratumTable& data, Rng& rng) {
  update_regression(state_, data, hyper_, steps_, rng, &tally_);
  if (!hyper_.is_dpm()) return;
  update_labels(state_, rng);
  update_sticks(state_, hyper_, rng);
  update_components(state_, hyper_, rng);
  update_shared(state_, hyper_, steps_.u, rng, &tally_);
}

void Sampler::adapt(int batch_index) {
  const double gain = 1.0 / std::sqrt(static_cast<double>(std::max(batch_index, 1)));
  for (std::size_t i = 0; i < steps_.coef.size(); ++i) {
    if (tally_.proposed[i] == 0) continue;
    steps_.coef[i] *= std::exp(gain * (tally_.rate(i) - adapt_.target_accept));
  }
  if (tally_.u_proposed > 0) {
    steps_.u *= std::exp(gain * (tally_.u_rate() - adapt_.target_accept));
    steps_.u = std::min(steps_.u, 2.0 * hyper_.f_0);
  }
  tally_.reset();
}

ChainDraws run_chain(const StratumTable& data, const Hyperparams& hyper, const ChainConfig& config,
                     std::size_t chain_index) {
  config.validate();
  hyper.validate();
  data.validate();
  const std::size_t J = data.num_aes();
  const std::size_t P = data.num_covariates();

  Rng rng(derive_seed(config.seed, chain_index));
  Sampler sampler(hyper, init_state(data, hyper, rng.engine()()), config);

  ChainDraws out;
  out.chain = chain_index;
  out.num_aes = J;
  out.num_covariates = P;
  const auto R = static_cast<std::size_t>(config.n_retained);
  out.iterations.reserve(R);
  out.beta.reserve(R * J);
  out.deviance.reserve(R);
  if (hyper.is_dpm()) out.z.reserve(R * J);
  if (config.store_alpha) out.alpha.reserve(R * J * P);
  out.alpha_mean.assign(J * P, 0.0);

  const int adapt_until = config.adapt_until();
  int batch = 0;
  for (int it = 1; it <= config.total_iterations(); ++it) {
    sampler.sweep(data, rng);
    if (it <= adapt_until && it % config.adapt.adapt_window == 0) sampler.adapt(++batch);
    if (it == config.n_burnin) sampler.reset_tally();
    if (it <= config.n_burnin || (it - config.n_burnin) % config.thin != 0) continue;

    const auto& st = sampler.state();
    const double deviance = -2.0 * log_likelihood(st, data);
    if (!std::isfinite(deviance)) {
      std::ostringstream msg;
      msg << "chain " << chain_index << ": non-finite deviance at iteration " << it;
      for (std::size_t j = 0; j < J; ++j) {
        if (!std::isfinite(ae_log_kernel(st.alpha_row(j), st.beta[j], data, j))) {
          msg << "; AE '" << data.ae_index[j] << "' beta=" << st.beta[j];
          break;
        }
      }
      if (hyper.is_dpm()) msg << "; u=" << st.u << " lambda=" << st.lambda << " mu_base=" << st.mu_base;
      out.completed = false;
      out.status = msg.str();
      break;
    }
    out.iterations.push_back(it);
    out.deviance.push_back(deviance);
    out.beta.insert(out.beta.end(), st.beta.begin(), st.beta.end());
    if (hyper.is_dpm()) out.z.insert(out.z.end(), st.z.begin(), st.z.end());
    if (config.store_alpha) out.alpha.insert(out.alpha.end(), st.alpha.begin(), st.alpha.end());
    const double w = 1.0 / static_cast<double>(out.deviance.size());
    for (std::size_t i = 0; i < st.alpha.size(); ++i) out.alpha_mean[i] += w * (st.alpha[i] - out.alpha_mean[i]);
  }

  const auto& tally = sampler.tally();
  out.accept_rate.resize(tally.accepted.size());
  for (std::size_t i = 0; i < out.accept_rate.size(); ++i) out.accept_rate[i] = tally.rate(i);
  out.u_accept_rate = tally.u_rate();
  return out;
}

PosteriorDraws run_chains(const StratumTable& data, const Hyperparams& hyper, const ChainConfig& config) {
  config.validate();
  PosteriorDraws draws;
  draws.hyper = hyper;
  draws.config = config;
  draws.ae_ids = data.ae_index;
  draws.num_covariates = data.num_covariates();
  draws.chains.resize(static_cast<std::size_t>(config.n_chains));

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(draws.chains.size());
  auto worker = [&] {
    for (std::size_t c = next++; c < draws.chains.size(); c = next++) {
      try {
        draws.chains[c] = run_chain(data, hyper, config, c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.threads), draws.chains.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::string failures;
  for (const auto& ch : draws.chains) {
    if (!ch.completed) failures += (failures.empty() ? "" : "; ") + ch.status;
  }
  if (!failures.empty()) {
    throw ChainAbortError("chain aborted: " + failures, std::make_shared<const PosteriorDraws>(draws));
  }
  return draws;
}

std::size_t PosteriorDraws::total_draws() const noexcept {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.size();
  return n;
}

std::vector<double> PosteriorDraws::pooled_beta(std::size_t j) const {
  std::vector<double> out;
  out.reserve(total_draws());
  for (const auto& c : chains) {
    for (std::size_t t = 0; t < c.size(); ++t) out.push_back(c.beta_at(t, j));
  }
  return out;
}

std::vector<std::vector<double>> PosteriorDraws::beta_by_chain(std::size_t j) const {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    auto& v = out.emplace_back();
    v.reserve(c.size());
    for (std::size_t t = 0; t < c.size(); ++t) v.push_back(c.beta_at(t, j));
  }
  return out;
}

std::vector<double> PosteriorDraws::pooled_deviance() const {
  std::vector<double> out;
  for (const auto& c : chains) out.insert(out.end(), c.deviance.begin(), c.deviance.end());
  return out;
}

std::vector<double> PosteriorDraws::mean_beta() const {
  const std::size_t J = num_aes();
  std::vector<double> sum(J, 0.0);
  for (const auto& c : chains) {
    for (std::size_t t = 0; t < c.size(); ++t) {
      for (std::size_t j = 0; j < J; ++j) sum[j] += c.beta_at(t, j);
    }
  }
  const double n = static_cast<double>(total_draws());
  for (auto& s : sum) s /= n;
  return sum;
}

std::vector<double> PosteriorDraws::mean_alpha() const {
  std::vector<double> out(num_aes() * num_covariates, 0.0);
  const double n = static_cast<double>(total_draws());
  for (const auto& c : chains) {
    const double w = static_cast<double>(c.size()) / n;
    for (std::size_t i = 0; i < out.size() && i < c.alpha_mean.size(); ++i) out[i] += w * c.alpha_mean[i];
  }
  return out;
}

PosteriorDraws PosteriorDraws::from_matrix(std::vector<std::string> ae_ids, std::vector<double> beta,
                                           std::vector<int> z, PriorMode mode, int K) {
  PosteriorDraws d;
  d.hyper.prior_mode = mode;
  d.hyper.K = K;
  d.config.n_chains = 1;
  d.ae_ids = std::move(ae_ids);
  ChainDraws c;
  c.num_aes = d.ae_ids.size();
  const std::size_t T = c.num_aes ? beta.size() / c.num_aes : 0;
  if (c.num_aes * T != beta.size()) throw ContractViolation("from_matrix: beta is not draws x J");
  if (!z.empty() && z.size() != beta.size()) throw ContractViolation("from_matrix: z shape differs from beta");
  c.beta = std::move(beta);
  c.z = std::move(z);
  c.deviance.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) c.iterations.push_back(static_cast<int>(t + 1));
  d.config.n_retained = static_cast<int>(T);
  d.chains.push_back(std::move(c));
  return d;
}

namespace {

nlohmann::ordered_json hyper_to_json(const Hyperparams& h) {
  nlohmann::ordered_json j;
  j["prior_mode"] = h.is_dpm() ? "DPM" : "IL";
  j["K"] = h.K;
  j["tau_alpha"] = h.tau_alpha;
  j["tau_0"] = h.tau_0;
  j["f_0"] = h.f_0;
  j["a_0"] = h.a_0;
  j["b_0"] = h.b_0;
  j["r_tau"] = h.r_tau;
  j["r_lambda"] = h.r_lambda;
  j["lambda_0"] = h.lambda_0;
  j["il_precision"] = h.il_precision;
  return j;
}

Hyperparams hyper_from_json(const nlohmann::json& j) {
  Hyperparams h;
  h.prior_mode = j.at("prior_mode").get<std::string>() == "IL" ? PriorMode::IL : PriorMode::DPM;
  h.K = j.at("K").get<int>();
  h.tau_alpha = j.at("tau_alpha").get<double>();
  h.tau_0 = j.at("tau_0").get<double>();
  h.f_0 = j.at("f_0").get<double>();
  h.a_0 = j.at("a_0").get<double>();
  h.b_0 = j.at("b_0").get<double>();
  h.r_tau = j.at("r_tau").get<double>();
  h.r_lambda = j.at("r_lambda").get<double>();
  h.lambda_0 = j.at("lambda_0").get<double>();
  h.il_precision = j.at("il_precision").get<double>();
  return h;
}

nlohmann::ordered_json config_to_json(const ChainConfig& c) {
  nlohmann::ordered_json j;
  j["n_chains"] = c.n_chains;
  j["n_burnin"] = c.n_burnin;
  j["thin"] = c.thin;
  j["n_retained"] = c.n_retained;
  j["seed"] = c.seed;
  j["target_accept"] = c.adapt.target_accept;
  j["adapt_window"] = c.adapt.adapt_window;
  j["adapt_until"] = c.adapt_until();
  j["store_alpha"] = c.store_alpha;
  j["initial_step"] = c.initial_step;
  j["initial_u_step"] = c.initial_u_step;
  j["ridge_move"] = c.ridge_move;
  return j;
}

ChainConfig config_from_json(const nlohmann::json& j) {
  ChainConfig c;
  c.n_chains = j.at("n_chains").get<int>();
  c.n_burnin = j.at("n_burnin").get<int>();
  c.thin = j.at("thin").get<int>();
  c.n_retained = j.at("n_retained").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adapt.target_accept = j.at("target_accept").get<double>();
  c.adapt.adapt_window = j.at("adapt_window").get<int>();
  c.adapt.adapt_until = j.at("adapt_until").get<int>();
  c.store_alpha = j.at("store_alpha").get<bool>();
  c.initial_step = j.at("initial_step").get<double>();
  c.initial_u_step = j.at("initial_u_step").get<double>();
  c.ridge_move = j.value("ridge_move", true);
  return c;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

csv::Table open_table(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return csv::read_table(in);
}

}  // namespace

void write_draws(const PosteriorDraws& draws, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t J = draws.num_aes();
  {
    auto out = open_out(dir / "draws_beta.csv");
    out << "chain,iter,ae_id,value\n";
    for (const auto& c : draws.chains) {
      for (std::size_t t = 0; t < c.size(); ++t) {
        const std::string prefix = std::to_string(c.chain) + "," + std::to_string(c.iterations[t]) + ",";
        for (std::size_t j = 0; j < J; ++j) {
          out << prefix << csv::escape(draws.ae_ids[j]) << ',' << csv::format_double(c.beta_at(t, j)) << '\n';
        }
      }
    }
  }
  if (draws.has_labels()) {
    auto out = open_out(dir / "draws_z.csv");
    out << "chain,iter,ae_id,label\n";
    for (const auto& c : draws.chains) {
      for (std::size_t t = 0; t < c.size(); ++t) {
        const std::string prefix = std::to_string(c.chain) + "," + std::to_string(c.iterations[t]) + ",";
        for (std::size_t j = 0; j < J; ++j) {
          out << prefix << csv::escape(draws.ae_ids[j]) << ',' << (c.z_at(t, j) + 1) << '\n';
        }
      }
    }
  }
  {
    auto out = open_out(dir / "deviance.csv");
    out << "chain,iter,deviance\n";
    for (const auto& c : draws.chains) {
      for (std::size_t t = 0; t < c.size(); ++t) {
        out << c.chain << ',' << c.iterations[t] << ',' << csv::format_double(c.deviance[t]) << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "alpha_mean.csv");
    out << "chain,ae_id,coef,value\n";
    for (const auto& c : draws.chains) {
      for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t p = 0; p < draws.num_covariates; ++p) {
          out << c.chain << ',' << csv::escape(draws.ae_ids[j]) << ',' << p << ','
              << csv::format_double(c.alpha_mean[j * draws.num_covariates + p]) << '\n';
        }
      }
    }
  }
  {
    nlohmann::ordered_json acc;
    acc["target_accept"] = draws.config.adapt.target_accept;
    nlohmann::ordered_json chains = nlohmann::ordered_json::array();
    for (const auto& c : draws.chains) {
      nlohmann::ordered_json jc;
      jc["chain"] = c.chain;
      const std::size_t stride = draws.num_covariates + 2;
      std::vector<double> beta_rates, alpha_rates, joint_rates;
      for (std::size_t j = 0; j < J && !c.accept_rate.empty(); ++j) {
        beta_rates.push_back(c.accept_rate[j * stride + draws.num_covariates]);
        if (draws.config.ridge_move) joint_rates.push_back(c.accept_rate[j * stride + draws.num_covariates + 1]);
        for (std::size_t p = 0; p < draws.num_covariates; ++p) alpha_rates.push_back(c.accept_rate[j * stride + p]);
      }
      auto summarize = [](std::vector<double> v) {
        nlohmann::ordered_json s;
        if (v.empty()) return s;
        std::sort(v.begin(), v.end());
        double sum = 0.0;
        for (double x : v) sum += x;
        s["min"] = v.front();
        s["mean"] = sum / static_cast<double>(v.size());
        s["max"] = v.back();
        return s;
      };
      jc["beta"] = summarize(beta_rates);
      jc["alpha"] = summarize(alpha_rates);
      if (!joint_rates.empty()) jc["joint"] = summarize(joint_rates);
      if (draws.has_labels()) jc["u"] = c.u_accept_rate;
      jc["status"] = c.status;
      chains.push_back(std::move(jc));
    }
    acc["chains"] = std::move(chains);
    auto out = open_out(dir / "acceptance.json");
    out << acc.dump(2) << '\n';
  }
  {
    nlohmann::ordered_json meta;
    meta["hyper"] = hyper_to_json(draws.hyper);
    meta["chains"] = config_to_json(draws.config);
    meta["num_covariates"] = draws.num_covariates;
    meta["ae_ids"] = draws.ae_ids;
    nlohmann::ordered_json status = nlohmann::ordered_json::array();
    for (const auto& c : draws.chains) status.push_back({{"chain", c.chain}, {"completed", c.completed}, {"draws", c.size()}});
    meta["chain_status"] = std::move(status);
    auto out = open_out(dir / "fit_meta.json");
    out << meta.dump(2) << '\n';
  }
}

PosteriorDraws read_draws(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "fit_meta.json");
  if (!meta_in) throw DataError("no fit found in " + dir.string());
  const auto meta = nlohmann::json::parse(meta_in);
  PosteriorDraws d;
  d.hyper = hyper_from_json(meta.at("hyper"));
  d.config = config_from_json(meta.at("chains"));
  d.num_covariates = meta.at("num_covariates").get<std::size_t>();
  d.ae_ids = meta.at("ae_ids").get<std::vector<std::string>>();
  const std::size_t J = d.ae_ids.size();
  const std::size_t P = d.num_covariates;
  for (const auto& s : meta.at("chain_status")) {
    ChainDraws c;
    c.chain = s.at("chain").get<std::size_t>();
    c.num_aes = J;
    c.num_covariates = P;
    c.completed = s.at("completed").get<bool>();
    c.alpha_mean.assign(J * P, 0.0);
    d.chains.push_back(std::move(c));
  }
  auto chain_of = [&](const std::string& text, std::size_t line) -> ChainDraws& {
    const auto idx = std::stoul(text);
    if (idx >= d.chains.size()) throw ParseError("chain index out of range", line);
    return d.chains[idx];
  };
  {
    const auto t = open_table(dir / "deviance.csv");
    for (const auto& r : t.rows) {
      auto& c = chain_of(r.fields.at(0), r.line);
      c.iterations.push_back(std::stoi(r.fields.at(1)));
      c.deviance.push_back(std::stod(r.fields.at(2)));
    }
  }
  {
    const auto t = open_table(dir / "draws_beta.csv");
    for (const auto& r : t.rows) chain_of(r.fields.at(0), r.line).beta.push_back(std::stod(r.fields.at(3)));
  }
  if (d.has_labels() && std::filesystem::exists(dir / "draws_z.csv")) {
    const auto t = open_table(dir / "draws_z.csv");
    for (const auto& r : t.rows) chain_of(r.fields.at(0), r.line).z.push_back(std::stoi(r.fields.at(3)) - 1);
  }
  if (std::filesystem::exists(dir / "alpha_mean.csv")) {
    const auto t = open_table(dir / "alpha_mean.csv");
    std::map<std::string, std::size_t> pos;
    for (std::size_t j = 0; j < J; ++j) pos[d.ae_ids[j]] = j;
    for (const auto& r : t.rows) {
      auto& c = chain_of(r.fields.at(0), r.line);
      const auto j = pos.at(r.fields.at(1));
      const auto p = std::stoul(r.fields.at(2));
      c.alpha_mean.at(j * P + p) = std::stod(r.fields.at(3));
    }
  }
  for (const auto& c : d.chains) {
    if (c.beta.size() != c.size() * J || (d.has_labels() && c.z.size() != c.size() * J)) {
      throw DataError("draw files in " + dir.string() + " are inconsistent");
    }
  }
  return d;
}

}  // namespace vaxsignal
