#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "vaxsignal/data_model.hpp"
#include "vaxsignal/error.hpp"

using namespace vaxsignal;
using namespace std::chrono;

namespace {

Date ymd(int y, unsigned m, unsigned d) { return Date{year{y}, month{m}, day{d}}; }

Report make_report(std::string id, VaccineGroup g, std::set<std::string> aes, double age = 40.0,
                   Gender gender = Gender::Female, Date date = Date{year{2020}, month{6}, day{1}}) {
  Report r;
  r.report_id = std::move(id);
  r.received_date = date;
  r.vaccine_group = g;
  r.gender = gender;
  r.age_years = age;
  r.ae_ids = std::move(aes);
  return r;
}

ParsedReports parse_canonical(const std::string& text) {
  std::istringstream in(text);
  return parse_canonical_reports(in);
}

const char* kHeader = "report_id,received_date,vaccine_group,gender,age_years,ae_list\n";

}  // namespace

TEST_SUITE("data_model") {

TEST_CASE("dates parse in both layouts") {
  CHECK(parse_iso_date("2020-03-16") == ymd(2020, 3, 16));
  CHECK(parse_us_date("03/16/2020") == ymd(2020, 3, 16));
  CHECK_FALSE(parse_iso_date("2020-02-30").has_value());
  CHECK_FALSE(parse_iso_date("16/03/2020").has_value());
  CHECK(to_string(ymd(2021, 1, 5)) == "2021-01-05");
}

TEST_CASE("canonical reports: groups, genders, AE lists") {
  auto parsed = parse_canonical(std::string(kHeader) +
                                "r1,2020-06-01,target,F,40,Headache; Fever\n"
                                "r2,2020-06-02,control,male,,Nausea\n"
                                "r3,2020-06-03,mixed,F,40,Fever\n"
                                "r4,2020-06-04,other,F,40,Fever\n"
                                "r5,2020-06-05,target,X,40,Fever\n"
                                "r6,2020-06-06,target,,40,\n");
  REQUIRE(parsed.reports.size() == 2);
  CHECK(parsed.reports[0].report_id == "r1");
  CHECK(parsed.reports[0].ae_ids == std::set<std::string>{"Fever", "Headache"});
  CHECK(parsed.reports[1].gender == Gender::Male);
  CHECK_FALSE(parsed.reports[1].age_years.has_value());
  REQUIRE(parsed.rejects.size() == 4);
  CHECK(parsed.rejects[0].reason == "mixed vaccine groups");
  CHECK(parsed.rejects[1].reason == "unparseable vaccine group 'other'");
  CHECK(parsed.rejects[2].reason == "unparseable gender");
  CHECK(parsed.rejects[3].reason == "no adverse events listed");
}

TEST_CASE("canonical reports: duplicates merge or conflict") {
  auto parsed = parse_canonical(std::string(kHeader) +
                                "a,2020-06-01,target,F,40,Fever\n"
                                "a,2020-06-01,target,F,40,Rash\n"
                                "b,2020-06-01,target,F,40,Fever\n"
                                "b,2020-06-01,target,F,41,Fever\n");
  REQUIRE(parsed.reports.size() == 1);
  CHECK(parsed.reports[0].ae_ids == std::set<std::string>{"Fever", "Rash"});
  REQUIRE(parsed.rejects.size() == 1);
  CHECK(parsed.rejects[0].report_id == "b");
  CHECK(parsed.rejects[0].reason == "duplicate report id with conflicting demographics");
}

TEST_CASE("canonical reports: missing id is a parse error with a line number") {
  try {
    parse_canonical(std::string(kHeader) + "r1,2020-06-01,target,F,40,Fever\n,2020-06-01,target,F,40,Fever\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("canonical reports: empty file warns") {
  auto parsed = parse_canonical("");
  CHECK(parsed.reports.empty());
  REQUIRE(parsed.warnings.size() == 1);
}

TEST_CASE("raw reports: symptom rows are unioned per id") {
  std::istringstream data(
      "VAERS_ID,RECVDATE,AGE_YRS,SEX\n"
      "100,06/01/2020,40,F\n"
      "101,06/01/2020,50,M\n"
      "102,06/01/2020,50,M\n"
      "103,06/01/2020,50,M\n");
  std::istringstream vax(
      "VAERS_ID,VAX_TYPE\n"
      "100,COVID19\n"
      "101,COVID19\n"
      "101,FLU3\n"
      "102,HEP\n");
  std::istringstream sym(
      "VAERS_ID,SYMPTOM1,SYMPTOM2,SYMPTOM3,SYMPTOM4,SYMPTOM5\n"
      "100,A,B,C,D,E\n"
      "100,F,G,A,,\n"
      "101,A,,,,\n"
      "102,A,,,,\n"
      "103,A,,,,\n");
  VaccineCodeSets codes{{"COVID19"}, {"FLU3", "FLU4"}};
  auto parsed = parse_raw_reports(data, vax, sym, codes);
  REQUIRE(parsed.reports.size() == 1);
  CHECK(parsed.reports[0].ae_ids.size() == 7);
  CHECK(parsed.reports[0].vaccine_group == VaccineGroup::Target);
  REQUIRE(parsed.rejects.size() == 3);
  CHECK(parsed.rejects[0].reason == "mixed vaccine groups");
  CHECK(parsed.rejects[1].reason == "no study vaccine");
  CHECK(parsed.rejects[2].reason == "no vaccine record");
}

TEST_CASE("raw reports: empty symptom file warns and forms nothing") {
  std::istringstream data("VAERS_ID,RECVDATE,AGE_YRS,SEX\n100,06/01/2020,40,F\n");
  std::istringstream vax("VAERS_ID,VAX_TYPE\n100,COVID19\n");
  std::istringstream sym("");
  auto parsed = parse_raw_reports(data, vax, sym, {{"COVID19"}, {"FLU3"}});
  CHECK(parsed.reports.empty());
  REQUIRE_FALSE(parsed.warnings.empty());
  CHECK(parsed.warnings[0].find("symptom file is empty") != std::string::npos);
}

TEST_CASE("exclusions: age, window and target date") {
  FilterPolicy policy;
  std::vector<Report> reports{
      make_report("a", VaccineGroup::Target, {"X"}, 17.5),
      make_report("b", VaccineGroup::Target, {"X"}, 40, Gender::Female, ymd(2020, 2, 1)),
      make_report("c", VaccineGroup::Control, {"X"}, 40, Gender::Female, ymd(2020, 2, 1)),
      make_report("d", VaccineGroup::Target, {"X"}, 18.0, Gender::Female, ymd(2020, 3, 16)),
  };
  Report no_age = make_report("e", VaccineGroup::Control, {"X"});
  no_age.age_years.reset();
  reports.push_back(no_age);

  auto res = apply_exclusions(reports, policy);
  REQUIRE(res.kept.size() == 2);
  CHECK(res.kept[0].report_id == "c");
  CHECK(res.kept[1].report_id == "d");
  CHECK(res.audit.at(std::string(exclusion::kUnderMinAge)) == 1);
  CHECK(res.audit.at(std::string(exclusion::kTargetTooEarly)) == 1);
  CHECK(res.audit.at(std::string(exclusion::kMissingAge)) == 1);
  CHECK(res.audit.at(std::string(exclusion::kOutsideWindow)) == 0);

  policy.window_start = ymd(2020, 3, 1);
  res = apply_exclusions(reports, policy);
  CHECK(res.audit.at(std::string(exclusion::kOutsideWindow)) == 2);
  CHECK(res.audit.at(std::string(exclusion::kTargetTooEarly)) == 0);
  CHECK(res.kept.size() == 1);
}

TEST_CASE("age bands are half open") {
  CHECK(assign_age_group(18.0) == AgeGroup::A18_30);
  CHECK(assign_age_group(29.99) == AgeGroup::A18_30);
  CHECK(assign_age_group(30.0) == AgeGroup::A30_65);
  CHECK(assign_age_group(64.999) == AgeGroup::A30_65);
  CHECK(assign_age_group(65.0) == AgeGroup::A65plus);
  CHECK_THROWS_AS(assign_age_group(17.99), ContractViolation);
}

TEST_CASE("filter_aes thresholds are inclusive") {
  FilterPolicy policy;  // total >= 5, target >= 1, control >= 4
  std::vector<Report> reports;
  int id = 0;
  auto add = [&](VaccineGroup g, const std::string& ae, int n) {
    for (int i = 0; i < n; ++i) reports.push_back(make_report(std::to_string(id++), g, {ae}));
  };
  add(VaccineGroup::Target, "keep", 1);
  add(VaccineGroup::Control, "keep", 4);
  add(VaccineGroup::Target, "no_target", 0);
  add(VaccineGroup::Control, "no_target", 9);
  add(VaccineGroup::Target, "few_control", 5);
  add(VaccineGroup::Control, "few_control", 3);
  add(VaccineGroup::Target, "few_total", 1);
  add(VaccineGroup::Control, "few_total", 3);
  CHECK(filter_aes(reports, policy) == std::vector<std::string>{"keep"});

  policy.min_total_cases = 100;
  CHECK_THROWS_AS(filter_aes(reports, policy), DataError);
}

TEST_CASE("aggregate: strata, counts and conservation") {
  std::vector<Report> reports{
      make_report("1", VaccineGroup::Target, {"A", "B"}, 25, Gender::Female),
      make_report("2", VaccineGroup::Target, {"A"}, 25, Gender::Female),
      make_report("3", VaccineGroup::Control, {"A", "Z"}, 70, Gender::Male),
      make_report("4", VaccineGroup::Control, {"B"}, 40, Gender::Unknown),
  };
  std::vector<std::string> aes{"B", "A", "A"};
  auto t = aggregate(reports, aes);
  t.validate();
  CHECK(t.ae_index == std::vector<std::string>{"A", "B"});
  REQUIRE(t.num_strata() == 3);  // empty cells are omitted
  std::int64_t total_n = 0;
  for (const auto& s : t.strata) total_n += s.n;
  CHECK(total_n == 4);
  // Counts sum to the number of reports mentioning each retained AE.
  auto row_sum = [&](std::size_t j) {
    std::int64_t s = 0;
    for (std::size_t k = 0; k < t.num_strata(); ++k) s += t.count(j, k);
    return s;
  };
  CHECK(row_sum(0) == 3);
  CHECK(row_sum(1) == 2);
  bool found = false;
  for (const auto& s : t.strata) {
    if (s.label == "Female|A18_30|Target") {
      found = true;
      CHECK(s.n == 2);
      CHECK(s.vaccine == 1);
      CHECK(s.x == std::vector<double>{1, 0, 0, 0, 0});
    }
    if (s.label == "Male|A65plus|Control") CHECK(s.x == std::vector<double>{1, 1, 0, 0, 1});
    if (s.label == "Unknown|A30_65|Control") CHECK(s.x == std::vector<double>{1, 0, 1, 1, 0});
  }
  CHECK(found);
}

TEST_CASE("aggregate is invariant to report order") {
  std::mt19937_64 rng(7);
  std::vector<Report> reports;
  const std::vector<std::string> pool{"A", "B", "C", "D"};
  for (int i = 0; i < 200; ++i) {
    std::set<std::string> aes;
    for (const auto& a : pool)
      if (rng() % 3 == 0) aes.insert(a);
    if (aes.empty()) aes.insert("A");
    reports.push_back(make_report(std::to_string(i), rng() % 2 ? VaccineGroup::Target : VaccineGroup::Control,
                                  aes, 18 + static_cast<double>(rng() % 70),
                                  static_cast<Gender>(rng() % 3)));
  }
  auto a = aggregate(reports, pool);
  std::shuffle(reports.begin(), reports.end(), rng);
  auto b = aggregate(reports, pool);
  CHECK(a.y == b.y);
  REQUIRE(a.num_strata() == b.num_strata());
  for (std::size_t s = 0; s < a.num_strata(); ++s) CHECK(a.strata[s].label == b.strata[s].label);
}

TEST_CASE("stratum table round trips through disk") {
  fixture::TempDir dir;
  auto t = fixture::two_strata({3, 0, 12}, {5, 1, 0}, 100, 200);
  write_stratum_table(t, dir.path());
  auto u = read_stratum_table(dir.path());
  CHECK(u.ae_index == t.ae_index);
  CHECK(u.y == t.y);
  REQUIRE(u.num_strata() == 2);
  CHECK(u.strata[1].n == 200);
  CHECK(u.strata[1].vaccine == 1);
}

TEST_CASE("validate rejects counts above exposure") {
  auto t = fixture::two_strata({3}, {5}, 2, 200);
  CHECK_THROWS_AS(t.validate(), DataError);
}

TEST_CASE("SOC map: multi membership, unmapped warnings, idempotence") {
  std::istringstream in(
      "ae_name,soc_name\n"
      "Fever,General\n"
      "Fever,Immune\n"
      "Fever,General\n"
      "Rash,Skin\n");
  auto map = load_soc_map(in);
  CHECK(map.memberships.at("Fever") == std::set<std::string>{"General", "Immune"});
  CHECK(map.groups.size() == 3);

  std::set<std::string> nc{"Rash", "Absent"};
  std::vector<std::string> ids{"Fever", "Rash", "Cough"};
  auto d1 = build_ae_dictionary(ids, &map, &nc);
  auto d2 = build_ae_dictionary(ids, &map, &nc);
  CHECK(d1.negative_control_count() == 1);
  CHECK(d1.entries.at("Cough").soc_groups.empty());
  CHECK(d1.warnings == d2.warnings);
  CHECK(d1.warnings.size() == 2);  // Cough unmapped, Absent not modeled

  std::istringstream bad("ae,soc\nFever,General\n");
  CHECK_THROWS_AS(load_soc_map(bad), ParseError);
}

TEST_CASE("NC list ignores comments and blanks") {
  std::istringstream in("# controls\nFever\n\n  Rash  \n#x\n");
  CHECK(load_nc_list(in) == std::set<std::string>{"Fever", "Rash"});
}

}  // TEST_SUITE
