#include "vaxsignal/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "vaxsignal/csv.hpp"
#include "vaxsignal/error.hpp"

namespace vaxsignal {

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ContractViolation("quantile of an empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0 || sorted[hi] == sorted[lo]) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

IntervalSummary summarize(std::vector<double> values) {
  if (values.empty()) throw ContractViolation("summary of an empty sample");
  IntervalSummary s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  s.lo = quantile_sorted(values, 0.025);
  s.hi = quantile_sorted(values, 0.975);
  return s;
}

std::vector<IntervalSummary> posterior_summary(const PosteriorDraws& draws) {
  if (draws.total_draws() < 2) throw ContractViolation("posterior_summary needs at least 2 draws");
  std::vector<IntervalSummary> out;
  out.reserve(draws.num_aes());
  for (std::size_t j = 0; j < draws.num_aes(); ++j) out.push_back(summarize(draws.pooled_beta(j)));
  return out;
}

std::set<std::size_t> resolve_ae_indices(const PosteriorDraws& draws, const std::set<std::string>& ids) {
  std::set<std::size_t> out;
  for (std::size_t j = 0; j < draws.num_aes(); ++j) {
    if (ids.count(draws.ae_ids[j])) out.insert(j);
  }
  return out;
}

SignalReport nc_signal_probability(const PosteriorDraws& draws, const std::set<std::size_t>& nc_index,
                                   int exceed_count, double cutoff) {
  const std::size_t J = draws.num_aes();
  const auto n_nc = static_cast<long>(nc_index.size());
  if (n_nc < 2) throw ConfigError("negative-control procedure needs at least 2 controls");
  if (exceed_count < 0 || n_nc <= exceed_count) {
    throw ConfigError("signals.exceed_count must be below the number of negative controls (" +
                      std::to_string(n_nc) + ")");
  }
  if (!(cutoff >= 0.0 && cutoff <= 1.0)) throw ConfigError("signals.cutoff must lie in [0, 1]");
  for (auto j : nc_index) {
    if (j >= J) throw ContractViolation("negative-control index out of range");
  }
  const long nc_threshold = std::min<long>(exceed_count, n_nc - 2);

  SignalReport report;
  report.exceed_count = exceed_count;
  report.cutoff = cutoff;
  auto& ind = report.indicators;
  ind.num_draws = draws.total_draws();
  ind.num_aes = J;
  ind.values.assign(ind.num_draws * J, 0);

  std::vector<double> nc_beta;
  nc_beta.reserve(nc_index.size());
  std::vector<std::size_t> hits(J, 0);
  std::size_t t_global = 0;
  for (const auto& chain : draws.chains) {
    for (std::size_t t = 0; t < chain.size(); ++t, ++t_global) {
      nc_beta.clear();
      for (auto k : nc_index) nc_beta.push_back(chain.beta_at(t, k));
      std::sort(nc_beta.begin(), nc_beta.end());
      for (std::size_t j = 0; j < J; ++j) {
        const double b = chain.beta_at(t, j);
        // Controls strictly below b; a control never counts itself.
        const auto below = std::lower_bound(nc_beta.begin(), nc_beta.end(), b) - nc_beta.begin();
        const long threshold = nc_index.count(j) ? nc_threshold : exceed_count;
        if (below > threshold) {
          ind.values[t_global * J + j] = 1;
          ++hits[j];
        }
      }
    }
  }

  const auto summaries = draws.total_draws() >= 2 ? posterior_summary(draws) : std::vector<IntervalSummary>(J);
  report.rows.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    auto& row = report.rows[j];
    row.ae_id = draws.ae_ids[j];
    row.beta = summaries[j];
    row.signal_probability =
        ind.num_draws ? static_cast<double>(hits[j]) / static_cast<double>(ind.num_draws) : 0.0;
    row.is_signal = row.signal_probability > cutoff;
    row.is_negative_control = nc_index.count(j) > 0;
  }
  return report;
}

GroupMembership membership_from_dictionary(std::span<const std::string> ae_ids, const AeDictionary& dict) {
  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t j = 0; j < ae_ids.size(); ++j) {
    auto it = dict.entries.find(ae_ids[j]);
    if (it == dict.entries.end()) continue;
    for (const auto& g : it->second.soc_groups) by_group[g].push_back(j);
  }
  GroupMembership m;
  for (auto& [g, members] : by_group) {
    m.groups.push_back(g);
    m.members.push_back(std::move(members));
  }
  return m;
}

double enrichment_odds_ratio(const EnrichmentTable& t) {
  if (t.a == 0) return 0.0;
  double a = static_cast<double>(t.a);
  double b = static_cast<double>(t.j_s - t.a);
  double c = static_cast<double>(t.c);
  double d = static_cast<double>(t.j_other - t.c);
  if (b == 0.0 || c == 0.0) {
    a += 0.5;
    b += 0.5;
    c += 0.5;
    d += 0.5;
  }
  return (a / b) / (c / d);
}

EnrichmentReport enrichment_eor(const IndicatorMatrix& indicators, const GroupMembership& membership,
                                double eor_mean_threshold) {
  EnrichmentReport report;
  report.eor_mean_threshold = eor_mean_threshold;
  const std::size_t J = indicators.num_aes;
  const std::size_t T = indicators.num_draws;
  if (T == 0) throw ContractViolation("enrichment needs at least one draw");

  std::vector<std::int64_t> total_signals(T, 0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < J; ++j) total_signals[t] += indicators.at(t, j) ? 1 : 0;
  }
  for (std::size_t g = 0; g < membership.groups.size(); ++g) {
    const auto& members = membership.members[g];
    if (members.empty()) {
      report.warnings.push_back("group '" + membership.groups[g] + "' has no modeled AEs; omitted");
      continue;
    }
    EnrichmentRow row;
    row.group = membership.groups[g];
    row.j_s = members.size();
    row.tables.reserve(T);
    std::vector<double> eor;
    eor.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      EnrichmentTable tab;
      tab.j_s = static_cast<std::int64_t>(members.size());
      tab.j_other = static_cast<std::int64_t>(J) - tab.j_s;
      for (auto j : members) tab.a += indicators.at(t, j) ? 1 : 0;
      tab.c = total_signals[t] - tab.a;
      eor.push_back(enrichment_odds_ratio(tab));
      row.tables.push_back(tab);
    }
    row.eor = summarize(std::move(eor));
    row.is_enriched = row.eor.lo > 1.0 && row.eor.mean > eor_mean_threshold;
    report.rows.push_back(std::move(row));
  }
  return report;
}

CoclusterMatrix coclustering(const PosteriorDraws& draws) {
  if (!draws.has_labels()) throw ContractViolation("co-clustering needs DPM draws with labels");
  const std::size_t J = draws.num_aes();
  const std::size_t T = draws.total_draws();
  if (T == 0) throw ContractViolation("co-clustering needs at least one draw");
  std::vector<std::uint32_t> same(J * J, 0);
  std::vector<std::vector<std::size_t>> groups;
  for (const auto& chain : draws.chains) {
    for (std::size_t t = 0; t < chain.size(); ++t) {
      groups.assign(static_cast<std::size_t>(std::max(draws.hyper.K, 1)), {});
      for (std::size_t j = 0; j < J; ++j) {
        const auto k = static_cast<std::size_t>(chain.z_at(t, j));
        if (k >= groups.size()) groups.resize(k + 1);
        groups[k].push_back(j);
      }
      for (const auto& g : groups) {
        for (auto i : g) {
          auto* row = same.data() + i * J;
          for (auto j : g) ++row[j];
        }
      }
    }
  }
  CoclusterMatrix m;
  m.size = J;
  m.values.resize(J * J);
  for (std::size_t i = 0; i < J * J; ++i) m.values[i] = static_cast<double>(same[i]) / static_cast<double>(T);
  return m;
}

double used_components(const PosteriorDraws& draws, double threshold) {
  if (!draws.has_labels()) throw ContractViolation("used_components needs DPM draws with labels");
  const std::size_t J = draws.num_aes();
  const std::size_t T = draws.total_draws();
  if (T == 0) return 0.0;
  const double need = threshold * static_cast<double>(J);
  std::size_t total = 0;
  std::vector<std::size_t> m;
  for (const auto& chain : draws.chains) {
    for (std::size_t t = 0; t < chain.size(); ++t) {
      m.assign(static_cast<std::size_t>(std::max(draws.hyper.K, 1)), 0);
      for (std::size_t j = 0; j < J; ++j) {
        const auto k = static_cast<std::size_t>(chain.z_at(t, j));
        if (k >= m.size()) m.resize(k + 1, 0);
        ++m[k];
      }
      for (auto mk : m) {
        if (mk > 0 && static_cast<double>(mk) >= need * (1.0 - 1e-12)) ++total;
      }
    }
  }
  return static_cast<double>(total) / static_cast<double>(T);
}

namespace {
std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}
}  // namespace

void write_signals_csv(const SignalReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  csv::write_row(out, {"ae_id", "name", "beta_mean", "ci_lo", "ci_hi", "signal_prob", "is_signal",
                       "is_negative_control"});
  for (const auto& r : report.rows) {
    csv::write_row(out, {r.ae_id, r.ae_id, csv::format_double(r.beta.mean), csv::format_double(r.beta.lo),
                         csv::format_double(r.beta.hi), csv::format_double(r.signal_probability),
                         r.is_signal ? "1" : "0", r.is_negative_control ? "1" : "0"});
  }
}

void write_enrichment_csv(const EnrichmentReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  csv::write_row(out, {"soc", "eor_mean", "ci_lo", "ci_hi", "is_enriched", "J_s"});
  for (const auto& r : report.rows) {
    csv::write_row(out, {r.group, csv::format_double(r.eor.mean), csv::format_double(r.eor.lo),
                         csv::format_double(r.eor.hi), r.is_enriched ? "1" : "0", std::to_string(r.j_s)});
  }
}

void write_cocluster_csv(const CoclusterMatrix& m, std::span<const std::string> ae_ids,
                         const std::filesystem::path& path) {
  auto out = open_out(path);
  std::vector<std::string> header{"ae_id"};
  header.insert(header.end(), ae_ids.begin(), ae_ids.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < m.size; ++i) {
    std::vector<std::string> row{ae_ids[i]};
    for (std::size_t j = 0; j < m.size; ++j) row.push_back(csv::format_double(m.at(i, j)));
    csv::write_row(out, row);
  }
}

}  // namespace vaxsignal
