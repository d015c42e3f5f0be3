#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace mcse {

inline double mean(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

// Monte Carlo standard error of the mean of a correlated series from
// non-overlapping batch means.
inline double batch_se(const std::vector<double>& x, std::size_t batches = 50) {
  const std::size_t b = x.size() / batches;
  std::vector<double> means(batches);
  for (std::size_t i = 0; i < batches; ++i) {
    double s = 0;
    for (std::size_t t = i * b; t < (i + 1) * b; ++t) s += x[t];
    means[i] = s / static_cast<double>(b);
  }
  return std::sqrt(variance(means) / static_cast<double>(batches));
}

// Standard error for independent draws.
inline double iid_se(const std::vector<double>& x) { return std::sqrt(variance(x) / static_cast<double>(x.size())); }

}  // namespace mcse
