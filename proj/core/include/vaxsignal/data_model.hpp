#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vaxsignal {

enum class VaccineGroup : std::uint8_t { Control, Target };
enum class Gender : std::uint8_t { Female, Male, Unknown };
enum class AgeGroup : std::uint8_t { A18_30, A30_65, A65plus };

using Date = std::chrono::year_month_day;

std::optional<Date> parse_iso_date(std::string_view text);
// MM/DD/YYYY, as found in raw VAERS dumps.
std::optional<Date> parse_us_date(std::string_view text);
std::string to_string(const Date& d);
std::string_view to_string(VaccineGroup g);
std::string_view to_string(Gender g);
std::string_view to_string(AgeGroup g);

struct Report {
  std::string report_id;
  Date received_date;
  VaccineGroup vaccine_group = VaccineGroup::Control;
  Gender gender = Gender::Unknown;
  std::optional<double> age_years;
  std::set<std::string> ae_ids;
};

struct RejectedReport {
  std::string report_id;
  std::string reason;
};

struct ParsedReports {
  std::vector<Report> reports;  // ordered by report_id
  std::vector<RejectedReport> rejects;
  std::vector<std::string> warnings;
};

// Which raw vaccine codes count as the target and the control exposure.
struct VaccineCodeSets {
  std::set<std::string> target;
  std::set<std::string> control;
};

// Canonical CSV: report_id,received_date,vaccine_group,gender,age_years,ae_list
ParsedReports parse_canonical_reports(std::istream& in);

// VAERS-style triple dump keyed by VAERS_ID.
ParsedReports parse_raw_reports(std::istream& data_file, std::istream& vax_file,
                                std::istream& symptom_file, const VaccineCodeSets& codes);

struct FilterPolicy {
  std::int64_t min_total_cases = 5;
  std::int64_t min_target_cases = 1;
  std::int64_t min_control_cases = 4;
  double min_age = 18.0;
  std::optional<Date> window_start;
  std::optional<Date> window_end;
  Date target_earliest_date{std::chrono::year{2020}, std::chrono::month{3}, std::chrono::day{16}};

  void validate() const;
};

namespace exclusion {
inline constexpr std::string_view kMissingAge = "missing_age";
inline constexpr std::string_view kUnderMinAge = "under_min_age";
inline constexpr std::string_view kOutsideWindow = "outside_date_window";
inline constexpr std::string_view kTargetTooEarly = "target_before_earliest_date";
}  // namespace exclusion

struct ExclusionResult {
  std::vector<Report> kept;
  std::map<std::string, std::size_t> audit;  // every reason present, zero counts included
};

ExclusionResult apply_exclusions(std::span<const Report> reports, const FilterPolicy& policy);

// Half-open bands [18,30), [30,65), [65,inf). Throws ContractViolation below 18.
AgeGroup assign_age_group(double age_years);

// AEs meeting all three count thresholds, sorted lexicographically.
// Throws DataError when nothing survives.
std::vector<std::string> filter_aes(std::span<const Report> reports, const FilterPolicy& policy);

struct Stratum {
  std::string label;
  std::vector<double> x;  // design vector; x[0] is the intercept when non-empty
  int vaccine = 0;        // 1 for the target group
  std::int64_t n = 0;     // reports in the stratum
};

// Per-AE binomial counts over covariate strata.
struct StratumTable {
  std::vector<Stratum> strata;
  std::vector<std::string> ae_index;
  std::vector<std::int64_t> y;  // row-major, ae_index.size() x strata.size()

  std::size_t num_aes() const noexcept { return ae_index.size(); }
  std::size_t num_strata() const noexcept { return strata.size(); }
  std::size_t num_covariates() const noexcept { return strata.empty() ? 0 : strata.front().x.size(); }

  std::int64_t count(std::size_t ae, std::size_t stratum) const { return y[ae * strata.size() + stratum]; }
  std::int64_t& count(std::size_t ae, std::size_t stratum) { return y[ae * strata.size() + stratum]; }

  // Throws DataError on shape or count-range violations.
  void validate() const;
};

inline constexpr std::size_t kRealDataCovariates = 5;

// Design: intercept, Male, Unknown gender, age 30-65, age 65+ (Female and
// 18-30 are the reference levels).
std::vector<double> design_vector(Gender gender, AgeGroup age_group);

// Aggregate into gender x age x vaccine strata; empty strata are omitted.
StratumTable aggregate(std::span<const Report> reports, std::span<const std::string> retained_aes);

// AE name -> SOC group names; repeated and duplicate rows are merged.
struct SocMap {
  std::map<std::string, std::set<std::string>> memberships;
  std::set<std::string> groups;
};

SocMap load_soc_map(std::istream& in);

// One AE name per line; blank lines and '#' comments ignored.
std::set<std::string> load_nc_list(std::istream& in);

struct AeEntry {
  std::string name;
  std::set<std::string> soc_groups;
  bool is_negative_control = false;
};

struct AeDictionary {
  std::map<std::string, AeEntry> entries;
  std::vector<std::string> warnings;

  std::size_t negative_control_count() const;
};

AeDictionary build_ae_dictionary(std::span<const std::string> ae_ids, const SocMap* soc_map,
                                 const std::set<std::string>* nc_list);

// Persistence of a stratum table as strata.csv + counts.csv in `dir`.
void write_stratum_table(const StratumTable& table, const std::filesystem::path& dir);
StratumTable read_stratum_table(const std::filesystem::path& dir);

}  // namespace vaxsignal
