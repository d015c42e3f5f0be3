#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace vaxsignal {

// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed for stream `stream` of a run seeded with `seed`. Distinct streams give
// decorrelated Mersenne Twister states even for adjacent seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// Random source used by every sampler and simulator. Normal draws are
// parameterized by precision, matching the model's notation; gamma draws by
// shape and rate.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                                   // [0, 1)
  double uniform_open();                              // (0, 1)
  double standard_normal();
  double normal(double mean, double precision);
  double gamma(double shape, double rate);
  double beta(double a, double b);
  std::int64_t binomial(std::int64_t n, double p);
  std::size_t uniform_index(std::size_t n);

  // Draw an index with probability proportional to exp(log_weights[k]).
  // Entries of -inf have zero mass; at least one entry must be finite.
  std::size_t categorical_log(std::span<const double> log_weights);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace vaxsignal
