#include "vaxsignal/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vaxsignal/error.hpp"

namespace vaxsignal {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

double Rng::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double Rng::uniform_open() {
  double u = 0.0;
  do {
    u = uniform();
  } while (u <= 0.0);
  return u;
}

double Rng::standard_normal() {
  return std::normal_distribution<double>(0.0, 1.0)(engine_);
}

double Rng::normal(double mean, double precision) {
  return mean + standard_normal() / std::sqrt(precision);
}

double Rng::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw ContractViolation("gamma draw needs positive shape and rate");
  }
  double g = std::gamma_distribution<double>(shape, 1.0)(engine_);
  // Shapes far below 1 underflow to zero; keep the draw inside the support.
  if (g <= 0.0) g = std::numeric_limits<double>::denorm_min();
  return g / rate;
}

double Rng::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

std::int64_t Rng::binomial(std::int64_t n, double p) {
  if (n <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  return std::binomial_distribution<std::int64_t>(n, p)(engine_);
}

std::size_t Rng::uniform_index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(top)) {
    throw ContractViolation("categorical draw with no finite weight");
  }
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw - top);
  double target = uniform() * total;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    const double w = std::exp(log_weights[k] - top);
    if (w <= 0.0) continue;
    last_positive = k;
    if (target < w) return k;
    target -= w;
  }
  return last_positive;
}

}  // namespace vaxsignal
