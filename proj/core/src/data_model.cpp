#include "vaxsignal/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <tuple>
#include <unordered_map>

#include "vaxsignal/csv.hpp"
#include "vaxsignal/error.hpp"

namespace vaxsignal {
namespace {

using std::chrono::day;
using std::chrono::month;
using std::chrono::year;

std::optional<int> parse_int(std::string_view s) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::optional<double> parse_real(std::string_view text) {
  const std::string s = csv::trim(text);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::optional<Date> make_date(std::optional<int> y, std::optional<int> m, std::optional<int> d) {
  if (!y || !m || !d) return std::nullopt;
  Date date{year{*y}, month{static_cast<unsigned>(*m)}, day{static_cast<unsigned>(*d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::optional<Gender> parse_gender(std::string_view text) {
  const std::string g = lower(csv::trim(text));
  if (g.empty() || g == "u" || g == "unknown") return Gender::Unknown;
  if (g == "f" || g == "female") return Gender::Female;
  if (g == "m" || g == "male") return Gender::Male;
  return std::nullopt;
}

const std::string& field(const csv::Row& row, std::size_t col) {
  static const std::string empty;
  return col < row.fields.size() ? row.fields[col] : empty;
}

bool same_demographics(const Report& a, const Report& b) {
  return a.received_date == b.received_date && a.vaccine_group == b.vaccine_group &&
         a.gender == b.gender && a.age_years == b.age_years;
}

// Merge duplicates by id; conflicting demographics move the id to the reject list.
ParsedReports finalize(std::vector<Report> candidates, std::vector<RejectedReport> rejects,
                       std::vector<std::string> warnings) {
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Report& a, const Report& b) { return a.report_id < b.report_id; });
  ParsedReports out;
  out.warnings = std::move(warnings);
  std::set<std::string> rejected_ids;
  for (const auto& r : rejects) rejected_ids.insert(r.report_id);
  for (std::size_t i = 0; i < candidates.size();) {
    std::size_t end = i + 1;
    while (end < candidates.size() && candidates[end].report_id == candidates[i].report_id) ++end;
    Report merged = candidates[i];
    bool conflict = false;
    for (std::size_t k = i + 1; k < end; ++k) {
      if (!same_demographics(merged, candidates[k])) conflict = true;
      merged.ae_ids.insert(candidates[k].ae_ids.begin(), candidates[k].ae_ids.end());
    }
    if (conflict) {
      rejects.push_back({merged.report_id, "duplicate report id with conflicting demographics"});
    } else if (rejected_ids.count(merged.report_id) == 0) {
      out.reports.push_back(std::move(merged));
    }
    i = end;
  }
  std::stable_sort(rejects.begin(), rejects.end(), [](const auto& a, const auto& b) {
    return std::tie(a.report_id, a.reason) < std::tie(b.report_id, b.reason);
  });
  out.rejects = std::move(rejects);
  return out;
}

}  // namespace

std::optional<Date> parse_iso_date(std::string_view text) {
  const std::string s = csv::trim(text);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  return make_date(parse_int(std::string_view(s).substr(0, 4)),
                   parse_int(std::string_view(s).substr(5, 2)),
                   parse_int(std::string_view(s).substr(8, 2)));
}

std::optional<Date> parse_us_date(std::string_view text) {
  const std::string s = csv::trim(text);
  const auto a = s.find('/');
  const auto b = a == std::string::npos ? a : s.find('/', a + 1);
  if (b == std::string::npos) return std::nullopt;
  std::string_view v(s);
  return make_date(parse_int(v.substr(b + 1)), parse_int(v.substr(0, a)),
                   parse_int(v.substr(a + 1, b - a - 1)));
}

std::string to_string(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

std::string_view to_string(VaccineGroup g) { return g == VaccineGroup::Target ? "Target" : "Control"; }

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::Female: return "Female";
    case Gender::Male: return "Male";
    case Gender::Unknown: break;
  }
  return "Unknown";
}

std::string_view to_string(AgeGroup g) {
  switch (g) {
    case AgeGroup::A18_30: return "A18_30";
    case AgeGroup::A30_65: return "A30_65";
    case AgeGroup::A65plus: break;
  }
  return "A65plus";
}

ParsedReports parse_canonical_reports(std::istream& in) {
  const csv::Table table = csv::read_table(in);
  std::vector<std::string> warnings;
  if (table.header.empty()) {
    warnings.emplace_back("report file is empty");
    return finalize({}, {}, std::move(warnings));
  }
  const auto c_id = table.require_column("report_id");
  const auto c_date = table.require_column("received_date");
  const auto c_group = table.require_column("vaccine_group");
  const auto c_gender = table.require_column("gender");
  const auto c_age = table.require_column("age_years");
  const auto c_aes = table.require_column("ae_list");

  std::vector<Report> candidates;
  std::vector<RejectedReport> rejects;
  for (const auto& row : table.rows) {
    Report r;
    r.report_id = csv::trim(field(row, c_id));
    if (r.report_id.empty()) throw ParseError("missing report_id", row.line);

    const std::string group = lower(csv::trim(field(row, c_group)));
    if (group == "target") {
      r.vaccine_group = VaccineGroup::Target;
    } else if (group == "control") {
      r.vaccine_group = VaccineGroup::Control;
    } else if (group == "mixed") {
      rejects.push_back({r.report_id, "mixed vaccine groups"});
      continue;
    } else {
      rejects.push_back({r.report_id, "unparseable vaccine group '" + group + "'"});
      continue;
    }
    auto date = parse_iso_date(field(row, c_date));
    if (!date) {
      rejects.push_back({r.report_id, "unparseable received_date"});
      continue;
    }
    r.received_date = *date;
    auto gender = parse_gender(field(row, c_gender));
    if (!gender) {
      rejects.push_back({r.report_id, "unparseable gender"});
      continue;
    }
    r.gender = *gender;
    if (!csv::trim(field(row, c_age)).empty()) {
      auto age = parse_real(field(row, c_age));
      if (!age || *age < 0.0) {
        rejects.push_back({r.report_id, "unparseable age"});
        continue;
      }
      r.age_years = age;
    }
    std::string_view list = field(row, c_aes);
    while (!list.empty()) {
      const auto cut = list.find(';');
      std::string name = csv::trim(list.substr(0, cut));
      if (!name.empty()) r.ae_ids.insert(std::move(name));
      if (cut == std::string_view::npos) break;
      list.remove_prefix(cut + 1);
    }
    if (r.ae_ids.empty()) {
      rejects.push_back({r.report_id, "no adverse events listed"});
      continue;
    }
    candidates.push_back(std::move(r));
  }
  return finalize(std::move(candidates), std::move(rejects), std::move(warnings));
}

ParsedReports parse_raw_reports(std::istream& data_file, std::istream& vax_file,
                                std::istream& symptom_file, const VaccineCodeSets& codes) {
  const csv::Table data = csv::read_table(data_file);
  const csv::Table vax = csv::read_table(vax_file);
  const csv::Table symptoms = csv::read_table(symptom_file);
  std::vector<std::string> warnings;
  std::vector<RejectedReport> rejects;

  auto key_of = [](const csv::Table& t, const csv::Row& row, std::size_t col) {
    std::string key = csv::trim(field(row, col));
    if (key.empty()) throw ParseError("missing VAERS_ID", row.line);
    (void)t;
    return key;
  };

  std::map<std::string, std::set<std::string>> aes_by_id;
  if (symptoms.header.empty() || symptoms.rows.empty()) {
    warnings.emplace_back("symptom file is empty; no reports can be formed");
  } else {
    const auto c_id = symptoms.require_column("VAERS_ID");
    std::vector<std::size_t> symptom_cols;
    for (int k = 1; k <= 5; ++k) {
      if (auto c = symptoms.column("SYMPTOM" + std::to_string(k))) symptom_cols.push_back(*c);
    }
    if (symptom_cols.empty()) throw ParseError("symptom file has no SYMPTOM1..SYMPTOM5 columns", 1);
    for (const auto& row : symptoms.rows) {
      auto& set = aes_by_id[key_of(symptoms, row, c_id)];
      for (auto c : symptom_cols) {
        std::string term = csv::trim(field(row, c));
        if (!term.empty()) set.insert(std::move(term));
      }
    }
  }

  std::map<std::string, std::vector<std::string>> vax_by_id;
  if (!vax.header.empty()) {
    const auto c_id = vax.require_column("VAERS_ID");
    const auto c_type = vax.require_column("VAX_TYPE");
    for (const auto& row : vax.rows) {
      vax_by_id[key_of(vax, row, c_id)].push_back(upper(csv::trim(field(row, c_type))));
    }
  }

  std::vector<Report> candidates;
  if (data.header.empty()) {
    warnings.emplace_back("data file is empty");
    return finalize({}, {}, std::move(warnings));
  }
  const auto c_id = data.require_column("VAERS_ID");
  const auto c_date = data.require_column("RECVDATE");
  const auto c_age = data.require_column("AGE_YRS");
  const auto c_sex = data.require_column("SEX");
  for (const auto& row : data.rows) {
    Report r;
    r.report_id = key_of(data, row, c_id);

    auto vit = vax_by_id.find(r.report_id);
    if (vit == vax_by_id.end()) {
      rejects.push_back({r.report_id, "no vaccine record"});
      continue;
    }
    bool has_target = false, has_control = false, has_other = false, has_blank = false;
    for (const auto& code : vit->second) {
      if (code.empty()) has_blank = true;
      else if (codes.target.count(code)) has_target = true;
      else if (codes.control.count(code)) has_control = true;
      else has_other = true;
    }
    if (has_blank) {
      rejects.push_back({r.report_id, "unparseable vaccine code"});
      continue;
    }
    if (has_target && (has_control || has_other)) {
      rejects.push_back({r.report_id, "mixed vaccine groups"});
      continue;
    }
    if (!has_target && !has_control) {
      rejects.push_back({r.report_id, "no study vaccine"});
      continue;
    }
    if (has_other) {
      rejects.push_back({r.report_id, "vaccine outside study sets"});
      continue;
    }
    r.vaccine_group = has_target ? VaccineGroup::Target : VaccineGroup::Control;

    auto date = parse_us_date(field(row, c_date));
    if (!date) date = parse_iso_date(field(row, c_date));
    if (!date) {
      rejects.push_back({r.report_id, "unparseable RECVDATE"});
      continue;
    }
    r.received_date = *date;
    auto gender = parse_gender(field(row, c_sex));
    if (!gender) {
      rejects.push_back({r.report_id, "unparseable SEX"});
      continue;
    }
    r.gender = *gender;
    if (!csv::trim(field(row, c_age)).empty()) {
      auto age = parse_real(field(row, c_age));
      if (!age || *age < 0.0) {
        rejects.push_back({r.report_id, "unparseable AGE_YRS"});
        continue;
      }
      r.age_years = age;
    }
    auto sit = aes_by_id.find(r.report_id);
    if (sit == aes_by_id.end() || sit->second.empty()) {
      rejects.push_back({r.report_id, "no adverse events listed"});
      continue;
    }
    r.ae_ids = sit->second;
    candidates.push_back(std::move(r));
  }
  return finalize(std::move(candidates), std::move(rejects), std::move(warnings));
}

void FilterPolicy::validate() const {
  if (min_total_cases < 0 || min_target_cases < 0 || min_control_cases < 0) {
    throw ConfigError("filter thresholds must be non-negative");
  }
  if (!(min_age >= 0.0)) throw ConfigError("min_age must be non-negative");
  if (window_start && window_end && *window_end < *window_start) {
    throw ConfigError("date window start is after its end");
  }
  if (!target_earliest_date.ok()) throw ConfigError("invalid target_earliest_date");
}

ExclusionResult apply_exclusions(std::span<const Report> reports, const FilterPolicy& policy) {
  policy.validate();
  ExclusionResult out;
  for (auto reason : {exclusion::kMissingAge, exclusion::kUnderMinAge, exclusion::kOutsideWindow,
                      exclusion::kTargetTooEarly}) {
    out.audit[std::string(reason)] = 0;
  }
  for (const auto& r : reports) {
    std::string_view reason;
    if (!r.age_years) {
      reason = exclusion::kMissingAge;
    } else if (*r.age_years < policy.min_age) {
      reason = exclusion::kUnderMinAge;
    } else if ((policy.window_start && r.received_date < *policy.window_start) ||
               (policy.window_end && *policy.window_end < r.received_date)) {
      reason = exclusion::kOutsideWindow;
    } else if (r.vaccine_group == VaccineGroup::Target &&
               r.received_date < policy.target_earliest_date) {
      reason = exclusion::kTargetTooEarly;
    }
    if (reason.empty()) {
      out.kept.push_back(r);
    } else {
      ++out.audit[std::string(reason)];
    }
  }
  return out;
}

AgeGroup assign_age_group(double age_years) {
  if (!(age_years >= 18.0)) {
    throw ContractViolation("assign_age_group: age below 18 must be excluded upstream");
  }
  if (age_years < 30.0) return AgeGroup::A18_30;
  if (age_years < 65.0) return AgeGroup::A30_65;
  return AgeGroup::A65plus;
}

std::vector<std::string> filter_aes(std::span<const Report> reports, const FilterPolicy& policy) {
  policy.validate();
  struct Tally {
    std::int64_t target = 0, control = 0;
  };
  std::map<std::string, Tally> tally;
  for (const auto& r : reports) {
    for (const auto& ae : r.ae_ids) {
      auto& t = tally[ae];
      (r.vaccine_group == VaccineGroup::Target ? t.target : t.control) += 1;
    }
  }
  std::vector<std::string> kept;
  for (const auto& [ae, t] : tally) {
    if (t.target + t.control >= policy.min_total_cases && t.target >= policy.min_target_cases &&
        t.control >= policy.min_control_cases) {
      kept.push_back(ae);
    }
  }
  if (kept.empty()) throw DataError("no AEs survive filters");
  return kept;
}

std::vector<double> design_vector(Gender gender, AgeGroup age_group) {
  return {1.0,
          gender == Gender::Male ? 1.0 : 0.0,
          gender == Gender::Unknown ? 1.0 : 0.0,
          age_group == AgeGroup::A30_65 ? 1.0 : 0.0,
          age_group == AgeGroup::A65plus ? 1.0 : 0.0};
}

StratumTable aggregate(std::span<const Report> reports, std::span<const std::string> retained_aes) {
  using Key = std::tuple<Gender, AgeGroup, VaccineGroup>;
  std::vector<std::string> aes(retained_aes.begin(), retained_aes.end());
  std::sort(aes.begin(), aes.end());
  aes.erase(std::unique(aes.begin(), aes.end()), aes.end());
  std::unordered_map<std::string, std::size_t> ae_pos;
  for (std::size_t j = 0; j < aes.size(); ++j) ae_pos.emplace(aes[j], j);

  std::map<Key, std::pair<std::int64_t, std::vector<std::int64_t>>> cells;
  for (const auto& r : reports) {
    if (!r.age_years) throw ContractViolation("aggregate: report without age passed exclusions");
    const Key key{r.gender, assign_age_group(*r.age_years), r.vaccine_group};
    auto& cell = cells[key];
    if (cell.second.empty()) cell.second.assign(aes.size(), 0);
    ++cell.first;
    for (const auto& ae : r.ae_ids) {
      if (auto it = ae_pos.find(ae); it != ae_pos.end()) ++cell.second[it->second];
    }
  }

  StratumTable table;
  table.ae_index = aes;
  for (const auto& [key, cell] : cells) {
    const auto [gender, age, group] = key;
    Stratum s;
    s.label = std::string(to_string(gender)) + "|" + std::string(to_string(age)) + "|" +
              std::string(to_string(group));
    s.x = design_vector(gender, age);
    s.vaccine = group == VaccineGroup::Target ? 1 : 0;
    s.n = cell.first;
    table.strata.push_back(std::move(s));
  }
  const std::size_t S = table.strata.size();
  table.y.assign(aes.size() * S, 0);
  std::size_t s = 0;
  for (const auto& [key, cell] : cells) {
    for (std::size_t j = 0; j < aes.size(); ++j) table.y[j * S + s] = cell.second[j];
    ++s;
  }
  return table;
}

void StratumTable::validate() const {
  const std::size_t S = strata.size();
  if (y.size() != ae_index.size() * S) throw DataError("count matrix shape does not match J x S");
  const std::size_t P = num_covariates();
  for (const auto& s : strata) {
    if (s.x.size() != P) throw DataError("stratum '" + s.label + "' has a design vector of the wrong length");
    if (P > 0 && s.x[0] != 1.0) throw DataError("stratum '" + s.label + "' lacks the intercept entry");
    if (s.n < 0) throw DataError("stratum '" + s.label + "' has negative exposure");
    if (s.vaccine != 0 && s.vaccine != 1) throw DataError("vaccine indicator must be 0 or 1");
  }
  for (std::size_t j = 0; j < ae_index.size(); ++j) {
    for (std::size_t k = 0; k < S; ++k) {
      const auto c = count(j, k);
      if (c < 0 || c > strata[k].n) {
        throw DataError("count for AE '" + ae_index[j] + "' in stratum '" + strata[k].label +
                        "' is outside [0, n]");
      }
    }
  }
}

SocMap load_soc_map(std::istream& in) {
  csv::Reader reader(in);
  SocMap map;
  auto header = reader.next();
  if (!header) return map;
  if (header->fields.size() != 2 || csv::trim(header->fields[0]) != "ae_name" ||
      csv::trim(header->fields[1]) != "soc_name") {
    throw ParseError("SOC map header must be 'ae_name,soc_name'", header->line);
  }
  while (auto row = reader.next()) {
    if (row->fields.size() == 1 && csv::trim(row->fields[0]).empty()) continue;
    if (row->fields.size() != 2) throw ParseError("SOC map row needs exactly 2 columns", row->line);
    std::string ae = csv::trim(row->fields[0]);
    std::string soc = csv::trim(row->fields[1]);
    if (ae.empty() || soc.empty()) throw ParseError("SOC map row has an empty field", row->line);
    map.groups.insert(soc);
    map.memberships[ae].insert(std::move(soc));
  }
  return map;
}

std::set<std::string> load_nc_list(std::istream& in) {
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    std::string name = csv::trim(line);
    if (name.empty() || name.front() == '#') continue;
    out.insert(std::move(name));
  }
  return out;
}

std::size_t AeDictionary::negative_control_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& kv) {
    return kv.second.is_negative_control;
  }));
}

AeDictionary build_ae_dictionary(std::span<const std::string> ae_ids, const SocMap* soc_map,
                                 const std::set<std::string>* nc_list) {
  AeDictionary dict;
  for (const auto& id : ae_ids) {
    if (dict.entries.count(id)) throw DataError("duplicate AE id '" + id + "'");
    AeEntry entry;
    entry.name = id;
    if (soc_map) {
      if (auto it = soc_map->memberships.find(id); it != soc_map->memberships.end()) {
        entry.soc_groups = it->second;
      } else {
        dict.warnings.push_back("AE '" + id + "' has no SOC mapping");
      }
    }
    entry.is_negative_control = nc_list && nc_list->count(id) > 0;
    dict.entries.emplace(id, std::move(entry));
  }
  if (nc_list) {
    for (const auto& nc : *nc_list) {
      if (!dict.entries.count(nc)) dict.warnings.push_back("negative control '" + nc + "' is not a modeled AE");
    }
  }
  return dict;
}

void write_stratum_table(const StratumTable& table, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "strata.csv", std::ios::binary);
    std::vector<std::string> header{"stratum", "vaccine", "n"};
    for (std::size_t p = 0; p < table.num_covariates(); ++p) header.push_back("x" + std::to_string(p));
    csv::write_row(out, header);
    for (const auto& s : table.strata) {
      std::vector<std::string> row{s.label, std::to_string(s.vaccine), std::to_string(s.n)};
      for (double v : s.x) row.push_back(csv::format_double(v));
      csv::write_row(out, row);
    }
  }
  {
    std::ofstream out(dir / "ae_index.csv", std::ios::binary);
    csv::write_row(out, {"ae_index", "ae_id"});
    for (std::size_t j = 0; j < table.num_aes(); ++j) {
      csv::write_row(out, {std::to_string(j), table.ae_index[j]});
    }
  }
  {
    std::ofstream out(dir / "counts.csv", std::ios::binary);
    std::vector<std::string> header{"ae_id"};
    for (const auto& s : table.strata) header.push_back(s.label);
    csv::write_row(out, header);
    for (std::size_t j = 0; j < table.num_aes(); ++j) {
      std::vector<std::string> row{table.ae_index[j]};
      for (std::size_t s = 0; s < table.num_strata(); ++s) row.push_back(std::to_string(table.count(j, s)));
      csv::write_row(out, row);
    }
  }
}

StratumTable read_stratum_table(const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw DataError("cannot open " + (dir / name).string());
    return csv::read_table(in);
  };
  StratumTable table;
  const auto strata = open("strata.csv");
  std::vector<std::size_t> xcols;
  for (std::size_t p = 0;; ++p) {
    auto c = strata.column("x" + std::to_string(p));
    if (!c) break;
    xcols.push_back(*c);
  }
  const auto c_label = strata.require_column("stratum");
  const auto c_vax = strata.require_column("vaccine");
  const auto c_n = strata.require_column("n");
  for (const auto& row : strata.rows) {
    Stratum s;
    s.label = field(row, c_label);
    auto v = parse_real(field(row, c_vax));
    auto n = parse_real(field(row, c_n));
    if (!v || !n) throw ParseError("bad stratum row", row.line);
    s.vaccine = static_cast<int>(*v);
    s.n = static_cast<std::int64_t>(*n);
    for (auto c : xcols) {
      auto x = parse_real(field(row, c));
      if (!x) throw ParseError("bad design entry", row.line);
      s.x.push_back(*x);
    }
    table.strata.push_back(std::move(s));
  }
  const auto counts = open("counts.csv");
  if (counts.header.size() != table.strata.size() + 1) {
    throw DataError("counts.csv columns do not match strata.csv");
  }
  for (const auto& row : counts.rows) {
    table.ae_index.push_back(field(row, 0));
    for (std::size_t s = 0; s < table.strata.size(); ++s) {
      auto c = parse_real(field(row, s + 1));
      if (!c) throw ParseError("bad count", row.line);
      table.y.push_back(static_cast<std::int64_t>(*c));
    }
  }
  table.validate();
  return table;
}

}  // namespace vaxsignal
