#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "beepsim/random.hpp"

namespace beepsim {

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw std::domain_error("mean_of: empty sample");
  double sum = 0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) throw std::domain_error("median_of: empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n % 2 == 1) return xs[n / 2];
  return 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Standard deviation of a binomial proportion estimate.
inline double binomial_sigma(double p, i64 trials) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

struct wilson_interval {
  double lo = 0;
  double hi = 1;
};

/// Wilson score interval for a binomial proportion; well behaved at zero
/// observed successes, which is the common case for error frequencies here.
inline wilson_interval wilson(i64 successes, i64 trials, double z = 1.959963985) {
  if (trials <= 0) throw std::domain_error("wilson: trials must be positive");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = n + z2;
  const double center = (static_cast<double>(successes) + z2 / 2.0) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) * n + z2 / 4.0) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Pearson chi-square statistic against the uniform distribution over
/// `cells` equiprobable outcomes.
inline double chi_square_uniform(std::span<const i64> counts) {
  if (counts.empty()) throw std::domain_error("chi_square_uniform: no cells");
  i64 total = 0;
  for (i64 c : counts) total += c;
  const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
  double stat = 0;
  for (i64 c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return stat;
}

// Upper-tail chi-square critical values at significance 0.001.
inline constexpr double chi2_crit_p001_df7 = 24.322;
inline constexpr double chi2_crit_p001_df4 = 18.467;

}  // namespace beepsim
