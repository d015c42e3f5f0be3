#include "vaxsignal/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "vaxsignal/error.hpp"
#include "vaxsignal/model.hpp"

namespace vaxsignal {

namespace {

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Sample covariance with an (n-1) denominator.
double covariance(std::span<const double> x, std::span<const double> y) {
  const double mx = mean_of(x), my = mean_of(y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace

double gelman_rubin(std::span<const std::vector<double>> chains) {
  const std::size_t m = chains.size();
  if (m < 2) throw ContractViolation("gelman_rubin needs at least 2 chains");
  const std::size_t n = chains.front().size();
  if (n < 10) throw ContractViolation("gelman_rubin needs chains of length >= 10");
  for (const auto& c : chains) {
    if (c.size() != n) throw ContractViolation("gelman_rubin needs chains of equal length");
  }
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);

  std::vector<double> xbar(m), s2(m), xbar_sq(m);
  for (std::size_t i = 0; i < m; ++i) {
    xbar[i] = mean_of(chains[i]);
    s2[i] = covariance(chains[i], chains[i]);
    xbar_sq[i] = xbar[i] * xbar[i];
  }
  const double W = mean_of(s2);
  const double B = nd * covariance(xbar, xbar);
  if (W <= 0.0) return B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;

  const double var_w = covariance(s2, s2) / md;
  const double var_b = 2.0 * B * B / (md - 1.0);
  const double grand = mean_of(xbar);
  const double cov_wb = (nd / md) * (covariance(s2, xbar_sq) - 2.0 * grand * covariance(s2, xbar));
  const double V = (nd - 1.0) / nd * W + (1.0 + 1.0 / md) * B / nd;
  const double var_v = ((nd - 1.0) * (nd - 1.0) * var_w + (1.0 + 1.0 / md) * (1.0 + 1.0 / md) * var_b +
                        2.0 * (nd - 1.0) * (1.0 + 1.0 / md) * cov_wb) /
                       (nd * nd);
  double df_adj = 1.0;
  if (var_v > 0.0) {
    const double df = 2.0 * V * V / var_v;
    df_adj = (df + 3.0) / (df + 1.0);
  }
  return std::max(1.0, std::sqrt(df_adj * V / W));
}

DicResult dic(std::span<const double> deviance, double plugin) {
  if (deviance.empty()) throw ContractViolation("dic needs at least one deviance draw");
  DicResult r;
  r.mean_deviance = mean_of(deviance);
  r.pd = r.mean_deviance - plugin;
  r.dic = r.mean_deviance + r.pd;
  r.negative_pd = r.pd < 0.0;
  return r;
}

double plugin_deviance(const PosteriorDraws& draws, const StratumTable& data) {
  ModelState st;
  st.num_covariates = data.num_covariates();
  st.alpha = draws.mean_alpha();
  st.beta = draws.mean_beta();
  return -2.0 * log_likelihood(st, data);
}

double mse(std::span<const double> estimates, std::span<const double> truth) {
  if (estimates.size() != truth.size()) throw ContractViolation("mse: length mismatch");
  if (estimates.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += (estimates[i] - truth[i]) * (estimates[i] - truth[i]);
  return s / static_cast<double>(truth.size());
}

double coverage(std::span<const IntervalSummary> intervals, std::span<const double> truth) {
  if (intervals.size() != truth.size()) throw ContractViolation("coverage: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (intervals[i].lo > intervals[i].hi) throw ContractViolation("coverage: interval is not ordered");
    if (intervals[i].lo <= truth[i] && truth[i] <= intervals[i].hi) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

RcSummary summarize_rc(std::vector<double> rc, double bound) {
  RcSummary s;
  if (rc.empty()) return s;
  std::sort(rc.begin(), rc.end());
  s.max = rc.back();
  s.p99 = quantile_sorted(rc, 0.99);
  const auto below = std::lower_bound(rc.begin(), rc.end(), bound) - rc.begin();
  s.frac_below = static_cast<double>(below) / static_cast<double>(rc.size());
  return s;
}

DiagnosticsReport diagnose(const PosteriorDraws& draws, const StratumTable& data,
                           const std::vector<double>* beta_truth) {
  DiagnosticsReport r;
  bool equal_lengths = draws.chains.size() >= 2;
  for (const auto& c : draws.chains) equal_lengths = equal_lengths && c.size() == draws.chains.front().size();
  if (equal_lengths && draws.chains.front().size() >= 10) {
    r.rc.reserve(draws.num_aes());
    for (std::size_t j = 0; j < draws.num_aes(); ++j) {
      const auto chains = draws.beta_by_chain(j);
      r.rc.push_back(gelman_rubin(chains));
    }
    r.rc_summary = summarize_rc(r.rc);
  } else {
    r.warnings.emplace_back("R_c not computed: needs >= 2 equal-length chains of >= 10 draws");
  }
  r.dic = dic(draws.pooled_deviance(), plugin_deviance(draws, data));
  if (r.dic.negative_pd) r.warnings.emplace_back("negative pD");
  if (beta_truth) {
    const auto summary = posterior_summary(draws);
    std::vector<double> means;
    for (const auto& s : summary) means.push_back(s.mean);
    r.mse = mse(means, *beta_truth);
    r.coverage = coverage(summary, *beta_truth);
  }
  return r;
}

std::string diagnostics_json(const DiagnosticsReport& report) {
  nlohmann::ordered_json j;
  j["dic"] = report.dic.dic;
  j["pd"] = report.dic.pd;
  j["mean_deviance"] = report.dic.mean_deviance;
  if (report.rc.empty()) {
    j["rc_summary"] = nullptr;
  } else {
    j["rc_summary"] = {{"max", report.rc_summary.max},
                       {"p99", report.rc_summary.p99},
                       {"frac_below_1.2", report.rc_summary.frac_below}};
  }
  if (report.mse) j["mse"] = *report.mse;
  if (report.coverage) j["coverage"] = *report.coverage;
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

}  // namespace vaxsignal
