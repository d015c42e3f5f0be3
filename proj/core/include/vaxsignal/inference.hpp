#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vaxsignal/data_model.hpp"
#include "vaxsignal/sampler.hpp"

namespace vaxsignal {

// Empirical quantile with linear interpolation between order statistics
// (h = (n-1) p). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double p);

struct IntervalSummary {
  double mean = 0.0;
  double lo = 0.0;  // 2.5%
  double hi = 0.0;  // 97.5%
};

IntervalSummary summarize(std::vector<double> values);

// Per-AE posterior mean and equal-tailed 95% interval, pooled across chains.
std::vector<IntervalSummary> posterior_summary(const PosteriorDraws& draws);

// Per-iteration signal indicators, draws x J, pooled in chain order.
struct IndicatorMatrix {
  std::size_t num_draws = 0;
  std::size_t num_aes = 0;
  std::vector<std::uint8_t> values;

  bool at(std::size_t t, std::size_t j) const { return values[t * num_aes + j] != 0; }
};

struct SignalRow {
  std::string ae_id;
  IntervalSummary beta;
  double signal_probability = 0.0;
  bool is_signal = false;
  bool is_negative_control = false;
};

struct SignalReport {
  std::vector<SignalRow> rows;
  IndicatorMatrix indicators;
  int exceed_count = 35;
  double cutoff = 0.90;
};

// In every retained draw, AE j is flagged when its beta exceeds more than
// `exceed_count` of the negative-control betas (excluding itself; the count is
// capped at |NC| - 2 when j is a control). Throws ConfigError if |NC| <= m.
SignalReport nc_signal_probability(const PosteriorDraws& draws, const std::set<std::size_t>& nc_index,
                                   int exceed_count = 35, double cutoff = 0.90);

// Negative-control set by AE id; ids that are not modeled are ignored.
std::set<std::size_t> resolve_ae_indices(const PosteriorDraws& draws, const std::set<std::string>& ids);

// Group memberships over the modeled AEs.
struct GroupMembership {
  std::vector<std::string> groups;
  std::vector<std::vector<std::size_t>> members;  // AE indices per group, ascending
};

GroupMembership membership_from_dictionary(std::span<const std::string> ae_ids, const AeDictionary& dict);

struct EnrichmentTable {
  std::int64_t a = 0;        // signals inside the group
  std::int64_t j_s = 0;      // AEs inside the group
  std::int64_t c = 0;        // signals outside
  std::int64_t j_other = 0;  // AEs outside
};

// [a/(J_s-a)] / [c/(J_s*-c)]; a = 0 gives 0. A zero in (J_s-a) or c with a > 0
// adds 0.5 to all four cells for that table only.
double enrichment_odds_ratio(const EnrichmentTable& t);

struct EnrichmentRow {
  std::string group;
  IntervalSummary eor;
  bool is_enriched = false;
  std::size_t j_s = 0;
  std::vector<EnrichmentTable> tables;  // one per draw
};

struct EnrichmentReport {
  std::vector<EnrichmentRow> rows;
  std::vector<std::string> warnings;
  double eor_mean_threshold = 2.0;
};

// Enriched iff the 95% interval lower bound exceeds 1 and the mean exceeds the threshold.
EnrichmentReport enrichment_eor(const IndicatorMatrix& indicators, const GroupMembership& membership,
                                double eor_mean_threshold = 2.0);

// Symmetric J x J matrix of same-label posterior probabilities, row-major.
struct CoclusterMatrix {
  std::size_t size = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * size + j]; }
};

CoclusterMatrix coclustering(const PosteriorDraws& draws);

// Mean over draws of the number of components holding at least threshold * J AEs.
double used_components(const PosteriorDraws& draws, double threshold = 0.05);

void write_signals_csv(const SignalReport& report, const std::filesystem::path& path);
void write_enrichment_csv(const EnrichmentReport& report, const std::filesystem::path& path);
void write_cocluster_csv(const CoclusterMatrix& m, std::span<const std::string> ae_ids,
                         const std::filesystem::path& path);

}  // namespace vaxsignal
