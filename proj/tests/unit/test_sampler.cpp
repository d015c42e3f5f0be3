#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "vaxsignal/sampler.hpp"

using namespace vaxsignal;

namespace {

ModelState fixed_dpm_state() {
  ModelState st;
  st.num_covariates = 1;
  st.alpha = {-5.0};
  st.beta = {0.7};
  st.z = {0};
  st.v = {0.3, 0.5, 0.2, 0.6};
  st.pi = stick_to_simplex(st.v);
  st.mu = {-1.0, 0.0, 0.5, 2.0, 3.0};
  st.tau = {1.0, 2.0, 0.5, 4.0, 1.5};
  st.mu_base = 0.2;
  st.u = 1.3;
  st.lambda = 0.7;
  return st;
}

ChainConfig short_config(std::uint64_t seed) {
  ChainConfig c;
  c.n_chains = 2;
  c.n_burnin = 400;
  c.thin = 2;
  c.n_retained = 200;
  c.seed = seed;
  return c;
}

// Batch-means standard error of a correlated series.
double batch_se(const std::vector<double>& x, std::size_t batches = 20) {
  const std::size_t b = x.size() / batches;
  std::vector<double> means;
  for (std::size_t i = 0; i < batches; ++i) {
    means.push_back(std::accumulate(x.begin() + static_cast<long>(i * b), x.begin() + static_cast<long>((i + 1) * b), 0.0) /
                    static_cast<double>(b));
  }
  const double m = oracle::mean(means);
  double ss = 0;
  for (double v : means) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(batches - 1) / static_cast<double>(batches));
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("a zero-width proposal is always accepted and changes nothing") {
  auto t = fixture::two_strata({4, 10}, {8, 2}, 1000, 2000);
  auto st = init_state(t, Hyperparams::il_informative(), 1);
  const auto before = st;
  StepSizes steps(t.num_aes(), t.num_covariates(), 0.0, 0.0);
  AcceptanceTally tally(t.num_aes(), t.num_covariates());
  Rng rng(3);
  for (int i = 0; i < 20; ++i) update_regression(st, t, Hyperparams::il_informative(), steps, rng, &tally);
  CHECK(st.alpha == before.alpha);
  CHECK(st.beta == before.beta);
  for (std::size_t i = 0; i < tally.accepted.size(); ++i) CHECK(tally.rate(i) == 1.0);
}

TEST_CASE("label draws follow the categorical full conditional") {
  auto st = fixed_dpm_state();
  std::vector<double> p(5);
  for (std::size_t k = 0; k < 5; ++k) {
    p[k] = st.pi[k] * static_cast<double>(oracle::normal_pdf(st.beta[0], st.mu[k], st.tau[k]));
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& x : p) x /= total;

  Rng rng(17);
  const int n = 40000;
  std::vector<int> hits(5, 0);
  for (int i = 0; i < n; ++i) {
    update_labels(st, rng);
    ++hits[static_cast<std::size_t>(st.z[0])];
  }
  for (std::size_t k = 0; k < 5; ++k) {
    const double se = std::sqrt(p[k] * (1 - p[k]) / n);
    CHECK(std::abs(hits[k] / static_cast<double>(n) - p[k]) < 4 * se + 1e-9);
  }
}

TEST_CASE("stick draws have the conjugate beta means") {
  Hyperparams h;
  ModelState st = fixed_dpm_state();
  st.beta.assign(10, 0.0);
  st.z = {0, 0, 0, 0, 1, 1, 3, 3, 3, 4};  // m = 4, 2, 0, 3, 1
  const std::vector<double> m{4, 2, 0, 3, 1};
  Rng rng(23);
  const int n = 20000;
  std::vector<double> sum(4, 0.0);
  for (int i = 0; i < n; ++i) {
    update_sticks(st, h, rng);
    for (std::size_t k = 0; k < 4; ++k) sum[k] += st.v[k];
    CHECK(std::accumulate(st.pi.begin(), st.pi.end(), 0.0) == doctest::Approx(1.0));
  }
  double tail = 10;
  for (std::size_t k = 0; k < 4; ++k) {
    tail -= m[k];
    const double a = 1 + m[k], b = 1 + tail;
    const double mean = a / (a + b), sd = std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1)));
    CHECK(std::abs(sum[k] / n - mean) < 4 * sd / std::sqrt(n));
  }
}

TEST_CASE("component means follow the conjugate normal") {
  Hyperparams h;
  ModelState st = fixed_dpm_state();
  st.beta = {1.0, 1.4, 2.2, -0.5};
  st.z = {0, 0, 0, 2};
  const auto start = st;
  Rng rng(29);
  const int n = 20000;
  std::vector<double> sum(5, 0.0);
  for (int i = 0; i < n; ++i) {
    st.tau = start.tau;  // condition on fixed precisions
    update_components(st, h, rng);
    for (std::size_t k = 0; k < 5; ++k) sum[k] += st.mu[k];
  }
  const double tb = 1.0 / (start.u * start.u);
  auto check_k = [&](std::size_t k, double m, double s) {
    const double prec = tb + m * start.tau[k];
    const double mean = (tb * start.mu_base + start.tau[k] * s) / prec;
    CHECK(std::abs(sum[k] / n - mean) < 4 / std::sqrt(prec * n));
  };
  check_k(0, 3, 4.6);
  check_k(1, 0, 0.0);
  check_k(2, 1, -0.5);
}

TEST_CASE("lambda and mu_base follow their conjugate full conditionals") {
  Hyperparams h;
  ModelState st = fixed_dpm_state();
  const auto start = st;
  Rng rng(31);
  const int n = 20000;
  double lam = 0, mb = 0;
  for (int i = 0; i < n; ++i) {
    st = start;
    update_shared(st, h, 0.0, rng);
    lam += st.lambda;
    mb += st.mu_base;
  }
  const double tau_sum = std::accumulate(start.tau.begin(), start.tau.end(), 0.0);
  const double shape = h.r_lambda + 5 * h.r_tau, rate = h.lambda_0 + tau_sum;
  CHECK(std::abs(lam / n - shape / rate) < 4 * std::sqrt(shape) / rate / std::sqrt(n));
  const double tb = 1.0 / (start.u * start.u);
  const double prec = h.tau_0 + 5 * tb;
  const double mean = tb * std::accumulate(start.mu.begin(), start.mu.end(), 0.0) / prec;
  CHECK(std::abs(mb / n - mean) < 4 / std::sqrt(prec * n));
}

TEST_CASE("u random walk targets its full conditional") {
  Hyperparams h;
  h.tau_0 = 1e12;  // pins mu_base at zero so u sees a fixed target
  ModelState st = fixed_dpm_state();
  st.mu_base = 0.0;
  double ss = 0;
  for (double m : st.mu) ss += m * m;
  Rng rng(37);
  std::vector<double> draws;
  for (int i = 0; i < 400000; ++i) {
    update_shared(st, h, 0.8, rng);
    if (i >= 2000 && i % 10 == 0) draws.push_back(st.u);
  }
  // Grid CDF of u^-K exp(-ss / 2u^2) on (0, f_0).
  const int G = 30000;
  std::vector<double> grid(G), cdf(G);
  double acc = 0;
  for (int g = 0; g < G; ++g) {
    const double u = (g + 0.5) * h.f_0 / G;
    grid[g] = u;
    acc += std::exp(-5 * std::log(u) - 0.5 * ss / (u * u));
    cdf[g] = acc;
  }
  for (auto& c : cdf) c /= acc;
  std::sort(draws.begin(), draws.end());
  double sup = 0;
  for (int g = 0; g < G; g += 50) {
    const double emp = static_cast<double>(std::upper_bound(draws.begin(), draws.end(), grid[g]) - draws.begin()) /
                       static_cast<double>(draws.size());
    sup = std::max(sup, std::abs(emp - cdf[g]));
  }
  CHECK(sup < 0.02);
}

TEST_CASE("chains are reproducible and independent of thread count") {
  auto t = fixture::two_strata({4, 10, 30}, {8, 2, 60}, 1000, 2000);
  auto c = short_config(99);
  auto a = run_chains(t, Hyperparams::dpm(), c);
  c.threads = 2;
  auto b = run_chains(t, Hyperparams::dpm(), c);
  REQUIRE(a.chains.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(a.chains[k].beta == b.chains[k].beta);
    CHECK(a.chains[k].z == b.chains[k].z);
    CHECK(a.chains[k].deviance == b.chains[k].deviance);
  }
  CHECK(a.chains[0].beta != a.chains[1].beta);
  CHECK(a.total_draws() == 400);
  CHECK(a.chains[0].iterations.front() == 400 + 2);
}

TEST_CASE("different seeds agree on posterior means within 3 standard errors") {
  auto t = fixture::two_strata({20, 50}, {45, 40}, 10000, 10000);
  auto c = short_config(1);
  c.n_chains = 1;
  c.n_burnin = 2000;
  c.n_retained = 4000;
  auto a = run_chains(t, Hyperparams::il_vague(), c);
  c.seed = 2;
  auto b = run_chains(t, Hyperparams::il_vague(), c);
  for (std::size_t j = 0; j < 2; ++j) {
    const auto xa = a.pooled_beta(j), xb = b.pooled_beta(j);
    const double se = std::hypot(batch_se(xa), batch_se(xb));
    CHECK(std::abs(oracle::mean(xa) - oracle::mean(xb)) < 3 * se);
  }
}

TEST_CASE("adaptation moves acceptance toward the target") {
  auto t = fixture::two_strata({40}, {90}, 10000, 10000);
  auto c = short_config(5);
  c.n_chains = 1;
  c.n_burnin = 3000;
  c.initial_step = 5.0;  // far too wide to start with
  auto d = run_chains(t, Hyperparams::il_vague(), c);
  const auto& rate = d.chains[0].accept_rate;
  CHECK(rate[0] > 0.3);
  CHECK(rate[0] < 0.6);
  CHECK(rate[1] > 0.3);
  CHECK(rate[1] < 0.6);
}

TEST_CASE("draws round trip through disk") {
  fixture::TempDir dir;
  auto t = fixture::two_strata({4, 10}, {8, 2}, 1000, 2000);
  auto c = short_config(7);
  c.n_retained = 20;
  c.n_burnin = 20;
  auto d = run_chains(t, Hyperparams::dpm(), c);
  write_draws(d, dir.path());
  auto r = read_draws(dir.path());
  REQUIRE(r.chains.size() == d.chains.size());
  CHECK(r.ae_ids == d.ae_ids);
  CHECK(r.hyper.is_dpm());
  for (std::size_t k = 0; k < d.chains.size(); ++k) {
    CHECK(r.chains[k].z == d.chains[k].z);
    REQUIRE(r.chains[k].beta.size() == d.chains[k].beta.size());
    for (std::size_t i = 0; i < d.chains[k].beta.size(); ++i) CHECK(r.chains[k].beta[i] == d.chains[k].beta[i]);
  }
}

TEST_CASE("invalid chain configuration is rejected") {
  ChainConfig c;
  c.thin = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ChainConfig{};
  c.adapt.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

}  // TEST_SUITE
