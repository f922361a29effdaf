#pragma once

#include <bit>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace beepsim {

using u64 = std::uint64_t;
using i64 = std::int64_t;

/// ⌈lg x⌉ clamped to a minimum of 1, so that bin counts and verification
/// call counts stay positive for x = 1 and x = 2.
constexpr i64 ceil_lg(i64 x) {
  if (x < 1) throw std::domain_error("ceil_lg: argument must be positive");
  const i64 w = std::bit_width(static_cast<u64>(x - 1));
  return w < 1 ? 1 : w;
}

inline constexpr u64 golden_gamma = 0x9E3779B97F4A7C15ull;

/// splitmix64 finalizer; bijective avalanche mix on 64 bits.
constexpr u64 mix64(u64 x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

/// Seed for substream `index` of a master seed. Used only by the test rig
/// and harness to hand each station an independent random stream; protocol
/// code never sees the index.
constexpr u64 derive_stream(u64 seed, u64 index) {
  return mix64(seed + golden_gamma * (index + 1));
}

enum class coin_face : unsigned char { tails = 0, heads = 1 };

/// Raw fair-bit producer. The default backend is splitmix64; tests may
/// substitute a scripted sequence.
class bit_source {
 public:
  virtual ~bit_source() = default;
  virtual bool next_bit() = 0;
};

class splitmix_bits final : public bit_source {
 public:
  explicit splitmix_bits(u64 seed) : state_(seed) {}

  bool next_bit() override {
    if (avail_ == 0) {
      state_ += golden_gamma;
      word_ = mix64(state_);
      avail_ = 64;
    }
    const bool b = (word_ >> 63) != 0;
    word_ <<= 1;
    --avail_;
    return b;
  }

 private:
  u64 state_;
  u64 word_ = 0;
  int avail_ = 0;
};

/// Fixed bit sequence for hand-scripted executions; throws when exhausted.
class scripted_bits final : public bit_source {
 public:
  explicit scripted_bits(const std::string& bits) {
    bits_.reserve(bits.size());
    for (char c : bits) {
      if (c != '0' && c != '1') throw std::invalid_argument("scripted_bits: expected '0'/'1'");
      bits_.push_back(c == '1');
    }
  }

  bool next_bit() override {
    if (pos_ >= bits_.size()) throw std::out_of_range("scripted_bits: sequence exhausted");
    return bits_[pos_++];
  }

 private:
  std::vector<bool> bits_;
  std::size_t pos_ = 0;
};

struct uniform_draw_info {
  i64 width_bits = 0;  // bits sampled per attempt
  i64 attempts = 0;    // rejection-sampling attempts, >= 1
};

/// Fair-coin stream with an exact count of consumed bits. Every sampling
/// operation is built from counted coin flips only; the counter increases
/// by exactly one per flip and never decreases.
class counted_random_source {
 public:
  explicit counted_random_source(u64 seed)
      : seed_(seed), bits_(std::make_unique<splitmix_bits>(seed)) {}

  /// Test backend; `label` is reported as the seed in diagnostics.
  explicit counted_random_source(std::unique_ptr<bit_source> bits, u64 label = 0)
      : seed_(label), bits_(std::move(bits)) {}

  coin_face coin() { return flip() ? coin_face::heads : coin_face::tails; }

  /// Exactly uniform over [lo, hi] via rejection sampling on
  /// ceil(lg(hi-lo+1))-bit draws. A singleton interval consumes no bits.
  i64 uniform(i64 lo, i64 hi, uniform_draw_info* info = nullptr) {
    if (lo > hi) throw std::invalid_argument("uniform: empty interval");
    const u64 span = static_cast<u64>(hi - lo + 1);
    if (span == 1) {
      if (info) *info = {0, 1};
      return lo;
    }
    const int width = std::bit_width(span - 1);
    for (i64 attempts = 1;; ++attempts) {
      const u64 v = take_bits(width);
      if (v < span) {
        if (info) *info = {width, attempts};
        return lo + static_cast<i64>(v);
      }
    }
  }

  /// k fresh bits as a '0'/'1' string, most significant first.
  std::string bit_string(i64 k) {
    if (k < 1) throw std::invalid_argument("bit_string: k must be positive");
    std::string s(static_cast<std::size_t>(k), '0');
    for (auto& c : s) c = flip() ? '1' : '0';
    return s;
  }

  u64 bits_consumed() const { return bits_consumed_; }
  u64 seed() const { return seed_; }

 private:
  bool flip() {
    ++bits_consumed_;
    return bits_->next_bit();
  }

  u64 take_bits(int width) {
    u64 v = 0;
    for (int i = 0; i < width; ++i) v = (v << 1) | (flip() ? 1u : 0u);
    return v;
  }

  u64 seed_;
  u64 bits_consumed_ = 0;
  std::unique_ptr<bit_source> bits_;
};

}  // namespace beepsim
