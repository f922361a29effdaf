#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "beepsim/metrics.hpp"
#include "beepsim/random.hpp"

// Analytic and brute-force references used to validate the protocol
// implementations. Deliberately independent of the protocol module: only the
// randomness module is shared.

namespace beepsim {

/// Probability that `participants` stations spread over `calls` time-disjoint
/// two-round collision probes (each station in exactly one call, each call
/// with at least one participant) escape detection in all of them: 2^(m-k).
inline double undetected_collision_probability(i64 participants, i64 calls) {
  if (calls < 1) throw std::domain_error("undetected_collision_probability: calls < 1");
  if (calls > participants)
    throw std::domain_error("undetected_collision_probability: more calls than participants");
  return std::ldexp(1.0, static_cast<int>(calls - participants));
}

/// Lexicographic minimum of equal-length bit strings, '0' < '1', leftmost
/// bit most significant.
inline std::string lex_min(const std::vector<std::string>& strings) {
  if (strings.empty()) throw std::domain_error("lex_min: empty input");
  const auto len = strings.front().size();
  for (const auto& s : strings)
    if (s.size() != len) throw std::domain_error("lex_min: mixed lengths");
  return *std::min_element(strings.begin(), strings.end());
}

struct ball_process_result {
  i64 total_throws = 0;
  i64 stages = 0;
  std::vector<i64> balls_per_stage;  // ball count at the start of each stage
};

/// Stand-alone simulation of the ball process: a stage throws the i
/// remaining balls into i·⌈lg n⌉ bins, removes singletons, and repeats with
/// the collided balls until none remain. Every throw is counted.
inline ball_process_result run_ball_process(i64 n, counted_random_source& source) {
  if (n < 2) throw std::domain_error("ball process: n must be at least 2");
  const i64 lgn = ceil_lg(n);
  ball_process_result result;
  std::vector<i64> occupancy;
  i64 balls = n;
  while (balls > 0) {
    result.stages += 1;
    result.balls_per_stage.push_back(balls);
    const i64 bins = balls * lgn;
    occupancy.assign(static_cast<std::size_t>(bins), 0);
    for (i64 b = 0; b < balls; ++b) {
      const i64 bin = source.uniform(1, bins);
      occupancy[static_cast<std::size_t>(bin - 1)] += 1;
      result.total_throws += 1;
    }
    i64 survivors = 0;
    for (i64 c : occupancy)
      if (c >= 2) survivors += c;
    balls = survivors;
  }
  return result;
}

/// Classify a name assignment for n stations. `proper` iff the names are a
/// permutation of 1..n; `duplicates_contiguous` iff the distinct names are
/// exactly 1..k' with k' < n; everything else (gaps, out-of-range, missing)
/// is `invalid`.
inline classification_result validate_names(const std::vector<i64>& names, i64 n) {
  if (n < 1 || names.size() != static_cast<std::size_t>(n))
    return {name_classification::invalid, 0};
  std::set<i64> distinct;
  for (i64 v : names) {
    if (v < 1 || v > n) return {name_classification::invalid, 0};
    distinct.insert(v);
  }
  const i64 k = *distinct.rbegin();
  if (static_cast<i64>(distinct.size()) != k) return {name_classification::invalid, 0};
  if (k == n) return {name_classification::proper, 0};
  return {name_classification::duplicates_contiguous, k};
}

}  // namespace beepsim
