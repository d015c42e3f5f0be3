#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "vaxsignal/error.hpp"
#include "vaxsignal/inference.hpp"
#include "vaxsignal/random.hpp"

using namespace vaxsignal;

namespace {

PosteriorDraws random_draws(std::size_t T, std::size_t J, std::uint64_t seed, bool ties = false) {
  Rng rng(seed);
  std::vector<double> beta(T * J);
  for (auto& b : beta) b = ties ? std::floor(rng.uniform() * 4.0) : rng.standard_normal();
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < J; ++j) ids.push_back("ae" + std::to_string(j));
  std::vector<int> z(T * J);
  for (auto& k : z) k = static_cast<int>(rng.uniform_index(5));
  return PosteriorDraws::from_matrix(ids, beta, z, PriorMode::DPM, 5);
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("quantiles interpolate between order statistics") {
  std::vector<double> x(100);
  std::iota(x.begin(), x.end(), 1.0);
  CHECK(quantile_sorted(x, 0.025) == doctest::Approx(3.475));
  CHECK(quantile_sorted(x, 0.975) == doctest::Approx(97.525));
  CHECK(quantile_sorted(x, 0.0) == 1.0);
  CHECK(quantile_sorted(x, 1.0) == 100.0);
  Rng rng(3);
  std::vector<double> y(37);
  for (auto& v : y) v = rng.standard_normal();
  auto s = summarize(y);
  CHECK(s.lo == doctest::Approx(oracle::quantile7(y, 0.025)));
  CHECK(s.hi == doctest::Approx(oracle::quantile7(y, 0.975)));
  CHECK(s.mean == doctest::Approx(oracle::mean(y)));
}

TEST_CASE("signal indicators match brute-force counting") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (bool ties : {false, true}) {
      auto d = random_draws(60, 12, seed, ties);
      std::set<std::size_t> nc{0, 2, 3, 5, 7, 8, 11};
      for (int m : {0, 2, 5, 6}) {
        auto rep = nc_signal_probability(d, nc, m, 0.5);
        for (std::size_t t = 0; t < 60; ++t) {
          std::vector<double> row(12);
          for (std::size_t j = 0; j < 12; ++j) row[j] = d.chains[0].beta_at(t, j);
          for (std::size_t j = 0; j < 12; ++j) {
            CHECK(rep.indicators.at(t, j) == oracle::nc_indicator(row, j, nc, m));
          }
        }
        for (std::size_t j = 0; j < 12; ++j) {
          std::size_t hits = 0;
          for (std::size_t t = 0; t < 60; ++t) hits += rep.indicators.at(t, j);
          CHECK(rep.rows[j].signal_probability == doctest::Approx(hits / 60.0));
          CHECK(rep.rows[j].is_signal == (hits / 60.0 > 0.5));
          CHECK(rep.rows[j].is_negative_control == (nc.count(j) > 0));
        }
      }
    }
  }
}

TEST_CASE("hand-checked signal probabilities") {
  // Four draws of five AEs; controls are 0, 1, 2.
  std::vector<double> beta{
      0.0, 1.0, 2.0, 3.0, -1.0,  //
      0.0, 1.0, 2.0, 1.5, -1.0,  //
      0.0, 1.0, 2.0, 0.5, -1.0,  //
      0.0, 1.0, 2.0, 1.0, -1.0,
  };
  auto d = PosteriorDraws::from_matrix({"n0", "n1", "n2", "x", "y"}, beta, {}, PriorMode::IL, 5);
  auto rep = nc_signal_probability(d, {0, 1, 2}, 1, 0.5);
  // x beats two or more controls in draws 0 and 1; in draw 3 it ties n1 and beats only n0.
  CHECK(rep.rows[3].signal_probability == doctest::Approx(0.5));
  CHECK_FALSE(rep.rows[3].is_signal);
  CHECK(rep.rows[4].signal_probability == 0.0);
  // n2 beats two other controls; its threshold is min(1, 3 - 2) = 1.
  CHECK(rep.rows[2].signal_probability == 1.0);
  CHECK(rep.rows[2].is_signal);
}

TEST_CASE("signal configuration errors") {
  auto d = random_draws(10, 6, 9);
  CHECK_THROWS_AS(nc_signal_probability(d, {0}, 0), ConfigError);
  CHECK_THROWS_AS(nc_signal_probability(d, {0, 1, 2}, 3), ConfigError);
  CHECK_THROWS_AS(nc_signal_probability(d, {0, 1, 2}, 1, 1.5), ConfigError);
  CHECK(resolve_ae_indices(d, {"ae1", "ae4", "missing"}) == std::set<std::size_t>{1, 4});
}

TEST_CASE("enrichment odds ratio cell rules") {
  CHECK(enrichment_odds_ratio({2, 4, 2, 8}) == doctest::Approx(3.0));
  CHECK(enrichment_odds_ratio({0, 4, 2, 8}) == 0.0);
  CHECK(enrichment_odds_ratio({4, 4, 2, 8}) == doctest::Approx(oracle::eor(4, 4, 2, 8)));
  CHECK(enrichment_odds_ratio({2, 4, 0, 8}) == doctest::Approx((2.5 * 8.5) / (2.5 * 0.5)));
  for (int a = 0; a <= 5; ++a)
    for (int c = 0; c <= 7; ++c)
      CHECK(enrichment_odds_ratio({a, 5, c, 7}) == doctest::Approx(oracle::eor(a, 5, c, 7)));
}

TEST_CASE("enrichment summarizes per-draw tables") {
  IndicatorMatrix ind;
  ind.num_draws = 3;
  ind.num_aes = 6;
  ind.values = {1, 1, 0, 1, 0, 0,  //
                1, 0, 0, 1, 0, 0,  //
                0, 0, 0, 0, 0, 0};
  GroupMembership g;
  g.groups = {"G", "Empty"};
  g.members = {{0, 1, 2}, {}};
  auto rep = enrichment_eor(ind, g, 2.0);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.warnings.size() == 1);
  const auto& row = rep.rows[0];
  CHECK(row.tables[0].a == 2);
  CHECK(row.tables[0].c == 1);
  CHECK(row.tables[0].j_other == 3);
  std::vector<double> eors{oracle::eor(2, 3, 1, 3), oracle::eor(1, 3, 1, 3), 0.0};
  CHECK(row.eor.mean == doctest::Approx(oracle::mean(eors)));
  CHECK(row.eor.lo == doctest::Approx(oracle::quantile7(eors, 0.025)));
  CHECK_FALSE(row.is_enriched);
}

TEST_CASE("membership counts an AE in every group it maps to") {
  SocMap soc;
  soc.memberships = {{"a", {"G1", "G2"}}, {"b", {"G2"}}};
  std::vector<std::string> ids{"a", "b", "c"};
  auto dict = build_ae_dictionary(ids, &soc, nullptr);
  auto m = membership_from_dictionary(ids, dict);
  REQUIRE(m.groups == std::vector<std::string>{"G1", "G2"});
  CHECK(m.members[0] == std::vector<std::size_t>{0});
  CHECK(m.members[1] == std::vector<std::size_t>{0, 1});
}

TEST_CASE("co-clustering is the same-label frequency") {
  auto d = random_draws(200, 7, 5);
  auto m = coclustering(d);
  REQUIRE(m.size == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(m.at(i, i) == 1.0);
    for (std::size_t j = 0; j < 7; ++j) {
      std::size_t same = 0;
      for (std::size_t t = 0; t < 200; ++t) same += d.chains[0].z_at(t, i) == d.chains[0].z_at(t, j);
      CHECK(m.at(i, j) == doctest::Approx(same / 200.0));
      CHECK(m.at(i, j) == m.at(j, i));
    }
  }
}

TEST_CASE("used components counts clusters above the size threshold") {
  // 20 AEs: labels sized 10, 9, 1 in draw 0 and 20 in draw 1.
  std::vector<int> z(40, 0);
  for (int j = 10; j < 19; ++j) z[j] = 1;
  z[19] = 2;
  std::vector<std::string> ids(20);
  for (int j = 0; j < 20; ++j) ids[j] = std::to_string(j);
  auto d = PosteriorDraws::from_matrix(ids, std::vector<double>(40, 0.0), z, PriorMode::DPM, 5);
  CHECK(used_components(d, 0.05) == doctest::Approx(2.0));  // (3 + 1) / 2
  CHECK(used_components(d, 0.10) == doctest::Approx(1.5));  // (2 + 1) / 2
}

TEST_CASE("posterior summary pools chains") {
  auto d = random_draws(50, 3, 13);
  auto s = posterior_summary(d);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(s[j].mean == doctest::Approx(oracle::mean(d.pooled_beta(j))));
    CHECK(s[j].hi == doctest::Approx(oracle::quantile7(d.pooled_beta(j), 0.975)));
  }
}

}  // TEST_SUITE
