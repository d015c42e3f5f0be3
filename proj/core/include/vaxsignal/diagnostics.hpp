#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vaxsignal/data_model.hpp"
#include "vaxsignal/inference.hpp"
#include "vaxsignal/sampler.hpp"

namespace vaxsignal {

// Corrected potential scale reduction factor (Brooks-Gelman form, as in
// R coda's gelman.diag point estimate): sqrt((d+3)/(d+1) * V / W), floored at 1.
// Needs >= 2 chains of equal length >= 10. Returns +inf when W = 0 < B.
double gelman_rubin(std::span<const std::vector<double>> chains);

struct DicResult {
  double dic = 0.0;
  double pd = 0.0;
  double mean_deviance = 0.0;
  bool negative_pd = false;
};

DicResult dic(std::span<const double> deviance, double plugin_deviance);

// Deviance at the pooled posterior means of alpha and beta.
double plugin_deviance(const PosteriorDraws& draws, const StratumTable& data);

double mse(std::span<const double> estimates, std::span<const double> truth);

// Fraction of truths inside closed intervals.
double coverage(std::span<const IntervalSummary> intervals, std::span<const double> truth);

struct RcSummary {
  double max = 1.0;
  double p99 = 1.0;
  double frac_below = 1.0;  // fraction with R_c < 1.2
};

RcSummary summarize_rc(std::vector<double> rc, double bound = 1.2);

struct DiagnosticsReport {
  std::vector<double> rc;  // per beta_j; empty with a single chain
  RcSummary rc_summary;
  DicResult dic;
  std::optional<double> mse;
  std::optional<double> coverage;
  std::vector<std::string> warnings;
};

// R_c for every beta (when >= 2 chains) and DIC; MSE/coverage when truth is given.
DiagnosticsReport diagnose(const PosteriorDraws& draws, const StratumTable& data,
                           const std::vector<double>* beta_truth = nullptr);

std::string diagnostics_json(const DiagnosticsReport& report);

}  // namespace vaxsignal
