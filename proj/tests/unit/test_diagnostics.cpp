#include <cmath>
#include <limits>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "vaxsignal/diagnostics.hpp"
#include "vaxsignal/error.hpp"

using namespace vaxsignal;

namespace {

std::vector<std::vector<double>> normal_chains(std::size_t m, std::size_t n, std::uint64_t seed,
                                               double spread = 0.0) {
  Rng rng(seed);
  std::vector<std::vector<double>> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < n; ++t) out[i].push_back(spread * static_cast<double>(i) + rng.standard_normal());
  }
  return out;
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("identical chains give exactly 1") {
  auto c = normal_chains(1, 200, 4);
  std::vector<std::vector<double>> chains{c[0], c[0], c[0]};
  CHECK(gelman_rubin(chains) == 1.0);
}

TEST_CASE("disjoint chains give a large factor") {
  auto chains = normal_chains(3, 500, 5, 50.0);
  CHECK(gelman_rubin(chains) > 10.0);
}

TEST_CASE("R_c matches the reference formula") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (double spread : {0.0, 0.3, 2.0}) {
      auto chains = normal_chains(3, 150, seed, spread);
      CHECK(std::abs(gelman_rubin(chains) - oracle::psrf(chains)) < 1e-10);
    }
  }
}

TEST_CASE("R_c is invariant to affine maps") {
  auto chains = normal_chains(4, 120, 8, 0.4);
  const double base = gelman_rubin(chains);
  for (auto& c : chains)
    for (auto& x : c) x = -3.0 * x + 7.5;
  CHECK(gelman_rubin(chains) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("R_c preconditions") {
  auto chains = normal_chains(1, 100, 1);
  CHECK_THROWS_AS(gelman_rubin(chains), ContractViolation);
  chains = normal_chains(2, 5, 1);
  CHECK_THROWS_AS(gelman_rubin(chains), ContractViolation);
  std::vector<std::vector<double>> flat{std::vector<double>(20, 1.0), std::vector<double>(20, 2.0)};
  CHECK(gelman_rubin(flat) == std::numeric_limits<double>::infinity());
}

TEST_CASE("DIC from mean deviance and plug-in") {
  const std::vector<double> dev{10.0, 12.0};
  auto r = dic(dev, 9.0);
  CHECK(r.mean_deviance == 11.0);
  CHECK(r.pd == 2.0);
  CHECK(r.dic == 13.0);
  CHECK_FALSE(r.negative_pd);
  CHECK(dic(dev, 12.0).negative_pd);
}

TEST_CASE("plug-in deviance uses pooled posterior means") {
  auto t = fixture::two_strata({5, 1}, {9, 0}, 500, 800);
  PosteriorDraws d = PosteriorDraws::from_matrix(t.ae_index, {0.2, -1.0, 0.6, -3.0}, {}, PriorMode::IL, 5);
  d.num_covariates = 1;
  d.chains[0].num_covariates = 1;
  d.chains[0].alpha_mean = {-4.0, -6.0};
  oracle::ld want = 0;
  const double beta[] = {0.4, -2.0};
  const double alpha[] = {-4.0, -6.0};
  for (std::size_t j = 0; j < 2; ++j) {
    want += oracle::binomial_logpmf(t.count(j, 0), 500, alpha[j]);
    want += oracle::binomial_logpmf(t.count(j, 1), 800, alpha[j] + beta[j]);
  }
  CHECK(plugin_deviance(d, t) == doctest::Approx(static_cast<double>(-2 * want)).epsilon(1e-10));
}

TEST_CASE("MSE and coverage") {
  const std::vector<double> est{1.0, 2.0, 4.0}, truth{1.0, 3.0, 2.0};
  CHECK(mse(est, truth) == doctest::Approx(5.0 / 3.0));
  const std::vector<IntervalSummary> iv{{0, 0.5, 1.5}, {0, 2.0, 3.0}, {0, -1.0, 1.0}};
  CHECK(coverage(iv, truth) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS(mse(est, std::vector<double>{1.0}));
}

TEST_CASE("R_c summary") {
  auto s = summarize_rc({1.0, 1.1, 1.25, 1.19});
  CHECK(s.max == 1.25);
  CHECK(s.frac_below == doctest::Approx(0.75));
}

TEST_CASE("diagnose produces parseable JSON") {
  auto t = fixture::two_strata({5, 40}, {9, 30}, 5000, 8000);
  ChainConfig c;
  c.n_chains = 2;
  c.n_burnin = 500;
  c.thin = 1;
  c.n_retained = 300;
  auto draws = run_chains(t, Hyperparams::il_informative(), c);
  const std::vector<double> truth{0.5, -0.3};
  auto rep = diagnose(draws, t, &truth);
  REQUIRE(rep.rc.size() == 2);
  REQUIRE(rep.mse.has_value());
  auto j = nlohmann::json::parse(diagnostics_json(rep));
  CHECK(j.contains("dic"));
  CHECK(std::isfinite(rep.dic.dic));
}

}  // TEST_SUITE
