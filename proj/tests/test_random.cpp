#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "beepsim/random.hpp"
#include "beepsim/stats.hpp"

using namespace beepsim;

TEST_CASE("ceil_lg clamps to one and rounds up") {
  CHECK(ceil_lg(1) == 1);
  CHECK(ceil_lg(2) == 1);
  CHECK(ceil_lg(3) == 2);
  CHECK(ceil_lg(4) == 2);
  CHECK(ceil_lg(5) == 3);
  CHECK(ceil_lg(64) == 6);
  CHECK(ceil_lg(65) == 7);
  CHECK(ceil_lg(1024) == 10);
  CHECK_THROWS_AS(ceil_lg(0), std::domain_error);
}

TEST_CASE("equal seeds give identical flip sequences") {
  counted_random_source a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 200; ++i) {
    const auto fa = a.coin(), fb = b.coin(), fc = c.coin();
    all_equal = all_equal && fa == fb;
    any_diff = any_diff || fa != fc;
  }
  CHECK(all_equal);
  CHECK(any_diff);
  CHECK(a.bits_consumed() == 200);
  CHECK(b.bits_consumed() == 200);
}

TEST_CASE("bit counter advances one per flip") {
  counted_random_source src(7);
  CHECK(src.bits_consumed() == 0);
  src.coin();
  CHECK(src.bits_consumed() == 1);
  src.coin();
  CHECK(src.bits_consumed() == 2);
}

TEST_CASE("uniform: singleton interval consumes nothing") {
  counted_random_source src(7);
  uniform_draw_info info{};
  CHECK(src.uniform(5, 5, &info) == 5);
  CHECK(src.bits_consumed() == 0);
  CHECK(info.width_bits == 0);
}

TEST_CASE("uniform: power-of-two range costs exactly its width") {
  counted_random_source src(11);
  for (int i = 0; i < 500; ++i) {
    const u64 before = src.bits_consumed();
    const i64 v = src.uniform(1, 8);
    CHECK(v >= 1);
    CHECK(v <= 8);
    CHECK(src.bits_consumed() - before == 3);
  }
}

TEST_CASE("uniform: empty interval is a caller bug") {
  counted_random_source src(1);
  CHECK_THROWS_AS(src.uniform(3, 2), std::invalid_argument);
}

TEST_CASE("uniform(1,5): mean bits per call is 3 * 8/5") {
  counted_random_source src(2026);
  const i64 calls = 100000;
  const double expected = 4.8;
  // sd of per-call bits = 3*sqrt((1-p)/p^2) with p = 5/8
  const double tol = 3.0 * (3.0 * std::sqrt(0.96)) / std::sqrt(static_cast<double>(calls));
  std::map<i64, i64> hist;
  const u64 before = src.bits_consumed();
  for (i64 i = 0; i < calls; ++i) hist[src.uniform(1, 5)] += 1;
  const double mean_bits =
      static_cast<double>(src.bits_consumed() - before) / static_cast<double>(calls);
  CHECK(std::abs(mean_bits - expected) <= tol);
  // exact uniformity over the five values at significance 0.001
  std::vector<i64> counts;
  for (i64 v = 1; v <= 5; ++v) counts.push_back(hist[v]);
  CHECK(chi_square_uniform(counts) < chi2_crit_p001_df4);
}

TEST_CASE("uniform: expected bits per draw below twice the width") {
  counted_random_source src(5);
  for (const auto& [lo, hi] : std::vector<std::pair<i64, i64>>{{1, 5}, {1, 384}, {0, 8}}) {
    const u64 span = static_cast<u64>(hi - lo + 1);
    const i64 width = std::bit_width(span - 1);
    const i64 calls = 20000;
    const u64 before = src.bits_consumed();
    for (i64 i = 0; i < calls; ++i) src.uniform(lo, hi);
    const double mean_bits =
        static_cast<double>(src.bits_consumed() - before) / static_cast<double>(calls);
    CHECK(mean_bits <= 2.0 * static_cast<double>(width));
  }
}

TEST_CASE("coin: heads frequency stays inside the binomial interval") {
  counted_random_source src(90210);
  const i64 flips = 100000;
  i64 heads = 0;
  for (i64 i = 0; i < flips; ++i)
    if (src.coin() == coin_face::heads) ++heads;
  const double freq = static_cast<double>(heads) / static_cast<double>(flips);
  CHECK(std::abs(freq - 0.5) <= 3.0 * binomial_sigma(0.5, flips));
}

TEST_CASE("bit_string: exact cost, determinism, rejection of k < 1") {
  counted_random_source a(3), b(3);
  const auto s1 = a.bit_string(8);
  CHECK(s1.size() == 8);
  CHECK(a.bits_consumed() == 8);
  CHECK(b.bit_string(8) == s1);
  const auto one = a.bit_string(1);
  CHECK((one == "0" || one == "1"));
  CHECK_THROWS_AS(a.bit_string(0), std::invalid_argument);
}

TEST_CASE("bit_string(3) is uniform over the eight cells") {
  counted_random_source src(777);
  std::vector<i64> counts(8, 0);
  for (i64 i = 0; i < 100000; ++i) {
    const auto s = src.bit_string(3);
    const std::size_t cell = static_cast<std::size_t>(std::stoi(s, nullptr, 2));
    counts[cell] += 1;
  }
  CHECK(chi_square_uniform(counts) < chi2_crit_p001_df7);
}

TEST_CASE("derived substreams are stable and decorrelated") {
  CHECK(derive_stream(1, 0) == derive_stream(1, 0));
  CHECK(derive_stream(1, 0) != derive_stream(1, 1));
  CHECK(derive_stream(1, 0) != derive_stream(2, 0));
  counted_random_source a(derive_stream(99, 0)), b(derive_stream(99, 1));
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.coin() == b.coin()) ++same;
  CHECK(same < 64);
}

TEST_CASE("scripted source replays its bits and then throws") {
  counted_random_source src(std::make_unique<scripted_bits>("101"), 0);
  CHECK(src.coin() == coin_face::heads);
  CHECK(src.coin() == coin_face::tails);
  CHECK(src.coin() == coin_face::heads);
  CHECK(src.bits_consumed() == 3);
  CHECK_THROWS_AS(src.coin(), std::out_of_range);
  CHECK_THROWS_AS(scripted_bits("10x"), std::invalid_argument);
}
