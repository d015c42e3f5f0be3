#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vaxsignal/data_model.hpp"
#include "vaxsignal/error.hpp"
#include "vaxsignal/model.hpp"
#include "vaxsignal/random.hpp"

namespace vaxsignal {

struct AdaptConfig {
  double target_accept = 0.44;
  int adapt_window = 50;
  std::optional<int> adapt_until;  // defaults to the end of burn-in
};

struct ChainConfig {
  int n_chains = 3;
  int n_burnin = 15000;
  int thin = 5;
  int n_retained = 1000;
  std::uint64_t seed = 20200316;
  AdaptConfig adapt;
  bool store_alpha = false;
  double initial_step = 0.5;    // random-walk sd for alpha and beta coordinates
  double initial_u_step = 0.5;  // random-walk sd for u
  bool ridge_move = true;       // joint (alpha_0 + d, beta - d) proposal after the coordinate moves
  int threads = 1;

  void validate() const;
  int adapt_until() const;
  int total_iterations() const { return n_burnin + thin * n_retained; }
};

// Proposal scales. `coef` is J x (P+2): alpha columns, beta, then the joint
// (alpha_0, beta) move.
struct StepSizes {
  std::size_t stride = 0;
  std::vector<double> coef;
  double u = 0.5;
  bool ridge = true;

  StepSizes() = default;
  StepSizes(std::size_t num_aes, std::size_t num_covariates, double initial, double u_initial, bool ridge_move = true)
      : stride(num_covariates + 2), coef(num_aes * (num_covariates + 2), initial), u(u_initial), ridge(ridge_move) {}
};

struct AcceptanceTally {
  std::size_t stride = 0;
  std::vector<std::uint64_t> accepted;
  std::vector<std::uint64_t> proposed;
  std::uint64_t u_accepted = 0;
  std::uint64_t u_proposed = 0;

  AcceptanceTally() = default;
  AcceptanceTally(std::size_t num_aes, std::size_t num_covariates)
      : stride(num_covariates + 2),
        accepted(num_aes * (num_covariates + 2), 0),
        proposed(num_aes * (num_covariates + 2), 0) {}

  void reset();
  double rate(std::size_t index) const;
  double u_rate() const;
};

// Per-coordinate random-walk Metropolis on (alpha_j, beta_j) for every AE,
// then (when steps.ridge) one joint move along (alpha_0, beta) = (d, -d).
void update_regression(ModelState& state, const StratumTable& data, const Hyperparams& hyper,
                       const StepSizes& steps, Rng& rng, AcceptanceTally* tally = nullptr);

// z_j ~ Categorical(pi_k N(beta_j | mu_k, tau_k)).
void update_labels(ModelState& state, Rng& rng);

// v_k ~ Beta(a_0 + m_k, b_0 + sum_{h>k} m_h); pi recomputed.
void update_sticks(ModelState& state, const Hyperparams& hyper, Rng& rng);

// Conjugate normal draw of mu_k, then gamma draw of tau_k given the new mu_k.
void update_components(ModelState& state, const Hyperparams& hyper, Rng& rng);

// mu_base and lambda by conjugacy; u by reflected random walk on (0, f_0).
void update_shared(ModelState& state, const Hyperparams& hyper, double u_step, Rng& rng,
                   AcceptanceTally* tally = nullptr);

// One Metropolis-within-Gibbs chain with Robbins-Monro step adaptation.
class Sampler {
 public:
  Sampler(Hyperparams hyper, ModelState initial, const ChainConfig& config);

  // update_regression -> labels -> sticks -> components -> shared (DPM only after the first).
  void sweep(const StratumTable& data, Rng& rng);
  // Rescale step sizes from the acceptance since the previous call, then reset the tally.
  void adapt(int batch_index);

  const ModelState& state() const noexcept { return state_; }
  ModelState& state() noexcept { return state_; }
  const StepSizes& steps() const noexcept { return steps_; }
  StepSizes& steps() noexcept { return steps_; }
  const AcceptanceTally& tally() const noexcept { return tally_; }
  void reset_tally() { tally_.reset(); }

 private:
  Hyperparams hyper_;
  AdaptConfig adapt_;
  ModelState state_;
  StepSizes steps_;
  AcceptanceTally tally_;
};

struct ChainDraws {
  std::size_t chain = 0;
  std::size_t num_aes = 0;
  std::size_t num_covariates = 0;
  std::vector<int> iterations;  // absolute sweep index of every retained draw
  std::vector<double> beta;     // draws x J
  std::vector<int> z;           // draws x J, DPM only
  std::vector<double> deviance;
  std::vector<double> alpha;       // draws x J x P when config.store_alpha
  std::vector<double> alpha_mean;  // J x P running mean over retained draws
  std::vector<double> accept_rate; // J x (P+2) over the sampling phase
  double u_accept_rate = 0.0;
  bool completed = true;
  std::string status = "ok";

  std::size_t size() const noexcept { return deviance.size(); }
  double beta_at(std::size_t t, std::size_t j) const { return beta[t * num_aes + j]; }
  int z_at(std::size_t t, std::size_t j) const { return z[t * num_aes + j]; }
};

struct PosteriorDraws {
  Hyperparams hyper;
  ChainConfig config;
  std::vector<std::string> ae_ids;
  std::size_t num_covariates = 0;
  std::vector<ChainDraws> chains;

  std::size_t num_aes() const noexcept { return ae_ids.size(); }
  std::size_t total_draws() const noexcept;
  bool has_labels() const noexcept { return hyper.is_dpm(); }

  // Draws of beta_j pooled in chain order.
  std::vector<double> pooled_beta(std::size_t j) const;
  std::vector<std::vector<double>> beta_by_chain(std::size_t j) const;
  std::vector<double> pooled_deviance() const;
  std::vector<double> mean_beta() const;
  std::vector<double> mean_alpha() const;  // J x P

  // Single-chain draws assembled from a pooled draws x J matrix (fixtures, tests).
  static PosteriorDraws from_matrix(std::vector<std::string> ae_ids, std::vector<double> beta,
                                    std::vector<int> z, PriorMode mode, int K);
};

// Thrown when a chain cannot continue; carries the partial draws of every chain.
class ChainAbortError : public ConvergenceError {
 public:
  ChainAbortError(const std::string& what, std::shared_ptr<const PosteriorDraws> partial)
      : ConvergenceError(what), partial_(std::move(partial)) {}
  const PosteriorDraws& partial() const noexcept { return *partial_; }

 private:
  std::shared_ptr<const PosteriorDraws> partial_;
};

// Runs one chain. A non-finite deviance stops the chain with completed = false
// and a diagnostic status; the draws retained so far are kept.
ChainDraws run_chain(const StratumTable& data, const Hyperparams& hyper, const ChainConfig& config,
                     std::size_t chain_index);

// Runs config.n_chains chains on up to config.threads threads. Output does not
// depend on scheduling. Throws ChainAbortError if any chain did not complete.
PosteriorDraws run_chains(const StratumTable& data, const Hyperparams& hyper, const ChainConfig& config);

// draws_beta.csv, draws_z.csv, deviance.csv, acceptance.json, alpha_mean.csv, fit_meta.json
void write_draws(const PosteriorDraws& draws, const std::filesystem::path& dir);
PosteriorDraws read_draws(const std::filesystem::path& dir);

}  // namespace vaxsignal
