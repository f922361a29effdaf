#pragma once

#include <string>
#include <vector>

#include "beepsim/random.hpp"

namespace beepsim {

enum class name_classification : unsigned char { proper, duplicates_contiguous, invalid };

/// Outcome of validating a name assignment: `proper` means a permutation of
/// 1..n; `duplicates_contiguous` means the name *set* is exactly 1..k_prime
/// for some k_prime < n (duplicates present); anything else is `invalid`.
struct classification_result {
  name_classification kind = name_classification::invalid;
  i64 k_prime = 0;  // set for duplicates_contiguous
};

inline std::string to_string(const classification_result& c) {
  switch (c.kind) {
    case name_classification::proper: return "proper";
    case name_classification::duplicates_contiguous: return "dup:" + std::to_string(c.k_prime);
    case name_classification::invalid: return "invalid";
  }
  return "invalid";
}

/// Observer-side per-station counters. Event counts are incremented at the
/// call sites that consume randomness, independently of the flip counter in
/// counted_random_source, so the two can be cross-checked per trial.
struct station_stats {
  i64 stages = 0;        // outer-loop iterations (mirrored across stations)
  i64 detect_calls = 0;  // detect-collision calls executed (mirrored)
  i64 detect_flips = 0;  // coins this station spent as a call participant
  i64 slot_draws = 0;    // slot draws performed (one ball throw each)
  i64 slot_bits = 0;     // sum of width*attempts over slot draws
  i64 string_draws = 0;  // bit-string draws performed
  i64 string_bits = 0;   // sum of k over string draws
};

/// Copies of the unsubscripted protocol variables every station must keep
/// identical; exposed so tests can compare them across stations after every
/// round. Stations never read each other's mirror.
struct mirror_state {
  i64 counter = 0;
  i64 left = 0;
  i64 right = 0;
  i64 k = 0;
  bool collision = false;
  std::string smallest;  // filled only when mirror_strings is enabled
};

/// One inner pass of the known-n protocol: scan interval and how many scan
/// positions produced a beep. Both are mirrored knowledge; the number of
/// balls thrown is not (duplicate-named stations are indistinguishable), so
/// it is deliberately absent.
struct scan_pass_record {
  i64 left = 0;
  i64 right = 0;
  i64 occupied = 0;
};

/// One stage of the unknown-n protocol: string length and number of inner
/// iterations (= bins processed).
struct stage_record {
  i64 k = 0;
  i64 iterations = 0;
};

struct trial_metrics {
  i64 rounds = 0;
  i64 bits = 0;
  i64 stages = 0;
  i64 detect_calls = 0;
  i64 slot_draws = 0;  // total ball throws across stations (known-n protocol)
  classification_result classification{};
  u64 seed = 0;
  bool diverged = false;
};

}  // namespace beepsim
