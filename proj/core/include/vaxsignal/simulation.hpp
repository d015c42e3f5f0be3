#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vaxsignal/data_model.hpp"
#include "vaxsignal/diagnostics.hpp"
#include "vaxsignal/model.hpp"
#include "vaxsignal/random.hpp"
#include "vaxsignal/sampler.hpp"

namespace vaxsignal {

// Normal generator for the per-AE intercept pool. The defaults are tuned so that
// with the default group sizes about a third of AEs have zero control reports
// and the per-cluster zero-target fractions sit near 32%, 12% and 4%.
struct InterceptGenerator {
  double mean = -9.8;
  double sd = 3.35;
  std::size_t pool_size = 300;
};

struct SimulationSpec {
  std::vector<double> cluster_means{-2.5, 0.0, 2.5};
  std::vector<std::size_t> cluster_sizes{50, 150, 100};
  double sigma = 0.5;
  std::vector<double> intercept_pool;  // used as-is when non-empty
  InterceptGenerator generator;
  std::int64_t n_target = 650000;
  std::int64_t n_control = 50000;
  int n_replicates = 25;
  std::uint64_t seed = 20230101;

  std::size_t num_aes() const;
  void validate() const;
};

struct SimulatedBetas {
  std::vector<double> beta;
  std::vector<int> cluster;  // 1-based cluster of origin
};

struct SimulatedDataset {
  StratumTable table;
  std::vector<double> beta_truth;
  std::vector<int> cluster_truth;
  std::vector<double> intercepts;
};

SimulatedBetas simulate_betas(const SimulationSpec& spec, Rng& rng);

// Intercept pool: the explicit pool, or pool_size draws from the generator.
std::vector<double> resolve_intercept_pool(const SimulationSpec& spec, Rng& rng);

// Two strata (control, then target) with an intercept-only design.
StratumTable two_group_design(std::size_t num_aes, std::int64_t n_control, std::int64_t n_target);

SimulatedDataset simulate_dataset(const SimulationSpec& spec, const SimulatedBetas& betas, Rng& rng);

// simulate_betas followed by simulate_dataset on the same stream.
SimulatedDataset simulate(const SimulationSpec& spec, Rng& rng);

// Fresh binomial counts for every (AE, stratum) given the state.
void redraw_counts(StratumTable& data, const ModelState& state, Rng& rng);

struct JointDraw {
  ModelState state;
  StratumTable data;
};

// Latents from the prior top-down, then counts from the likelihood, on the
// strata and AE index of `design`.
JointDraw exact_joint_draw(const Hyperparams& hyper, const StratumTable& design, Rng& rng);

struct StudyModel {
  std::string name;
  Hyperparams hyper;
};

std::vector<StudyModel> default_study_models();

struct StudyConfig {
  std::vector<double> sigmas{0.5, 0.8, 1.0};
  SimulationSpec spec;
  ChainConfig chains;
  std::vector<StudyModel> models = default_study_models();
  int threads = 1;  // replicates in flight
};

struct StudyRow {
  double sigma = 0.0;
  std::string model;
  int replicate = 0;
  bool ok = true;
  std::string error;
  double dic = 0.0;
  double mse = 0.0;
  double coverage = 0.0;
  std::size_t rc_total = 0;  // betas with an R_c value
  std::size_t rc_below = 0;  // of which R_c < 1.2
};

struct StudySummaryRow {
  double sigma = 0.0;
  std::string model;
  std::size_t n_ok = 0;
  double dic = 0.0;
  double mse = 0.0;
  double coverage = 0.0;
  double rc_frac_below = 0.0;
};

// Posterior summaries of the designated replicate (replicate 0) of a sigma.
struct DesignatedFit {
  double sigma = 0.0;
  std::vector<std::string> ae_ids;
  std::vector<double> beta_truth;
  std::vector<std::string> models;
  std::vector<std::vector<IntervalSummary>> summaries;  // per model
  CoclusterMatrix cocluster;                            // first DPM model
};

struct StudyReport {
  std::vector<StudyRow> rows;
  std::vector<StudySummaryRow> summary;
  std::vector<DesignatedFit> designated;
};

using StudyProgress = std::function<void(const StudyRow&)>;

// Replicates are independent and may run in parallel; results are ordered by
// (sigma, replicate, model) regardless of scheduling. A failed fit is recorded
// and excluded from the summary.
StudyReport run_study(const StudyConfig& config, const StudyProgress& progress = {});

std::vector<StudySummaryRow> summarize_study(const std::vector<StudyRow>& rows);

// study_report.csv, study_summary.csv, and per-sigma caterpillar/cocluster CSVs.
void write_study(const StudyReport& report, const std::filesystem::path& dir);
void write_simulated_dataset(const SimulatedDataset& ds, const std::filesystem::path& dir);
std::vector<double> read_truth(const std::filesystem::path& dir, std::span<const std::string> ae_ids);

}  // namespace vaxsignal
