#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "beepsim/channel.hpp"
#include "beepsim/oracle.hpp"

namespace beepsim {

namespace detail {

// Split of the two-round probe around its round requests, so protocol loops
// can run it without a coroutine frame per call. detect_collision below and
// the naming loops share exactly this state machine.
struct probe_state {
  i64 call_index = 0;
  bool participant = false;
  coin_face toss = coin_face::tails;
};

inline probe_state probe_begin(station_context& ctx, bool participant) {
  probe_state p;
  p.call_index = ctx.stats.detect_calls;
  p.participant = participant;
  ctx.stats.detect_calls += 1;
  if (ctx.detect_override) ctx.detect_override->note(p.call_index, participant);
  if (participant) {
    p.toss = ctx.rng().coin();
    ctx.stats.detect_flips += 1;
  }
  return p;
}

inline station_action probe_action(const probe_state& p, int round) {
  const bool beep_now = p.participant && ((round == 0) == (p.toss == coin_face::heads));
  return beep_now ? station_action::beep : station_action::pause;
}

inline bool probe_result(station_context& ctx, const probe_state& p, channel_feedback first,
                         channel_feedback second) {
  const bool detected =
      first == channel_feedback::beep && second == channel_feedback::beep;
  if (ctx.detect_override) return ctx.detect_override->resolve(p.call_index);
  return detected;
}

}  // namespace detail

/// Two-round collision probe. Each participant tosses a coin and beeps in
/// the first round on heads, in the second on tails; hearing a beep in both
/// rounds exposes a collision. Non-participants pause through both rounds,
/// and every station computes the same result from the feedback alone.
inline proto_task<bool> detect_collision(station_context& ctx, bool participant) {
  const auto probe = detail::probe_begin(ctx, participant);
  const auto first = co_await ctx.round(detail::probe_action(probe, 0));
  const auto second = co_await ctx.round(detail::probe_action(probe, 1));
  co_return detail::probe_result(ctx, probe, first, second);
}

/// k-round radix search for the lexicographically smallest k-bit string held
/// by any station. At bit position i, stations whose string matches the
/// minimum on the first i-1 positions and has 0 at position i beep; a beep
/// fixes that bit of the result to 0. `mine == nullptr` makes the station a
/// pure listener. Takes exactly k rounds and consumes no random bits.
inline proto_task<std::string> next_string(station_context& ctx, i64 k,
                                           const std::string* mine) {
  std::string out(static_cast<std::size_t>(k), '1');
  bool candidate = mine != nullptr;
  for (i64 i = 0; i < k; ++i) {
    const auto pos = static_cast<std::size_t>(i);
    const bool beep_now = candidate && (*mine)[pos] == '0';
    const auto fb =
        co_await ctx.round(beep_now ? station_action::beep : station_action::pause);
    if (fb == channel_feedback::beep) out[pos] = '0';
    if (candidate && (*mine)[pos] != out[pos]) candidate = false;
  }
  co_return out;
}

struct lv_config {
  i64 n = 1;     // station count, known to every station
  i64 beta = 2;  // verification calls per occupied slot, times ceil_lg(n)
};

/// Las Vegas naming for known n. Unnamed stations throw their slot into the
/// current interval, the interval is scanned one listening round per slot,
/// and every beeping slot is verified with beta*ceil_lg(n) collision probes.
/// A clean verification assigns the next name to the slot's occupants. After
/// the scan, still-unnamed stations beep once: a beep opens a fresh interval
/// for the remaining stations, silence ends the pass. The whole assignment
/// restarts unless counter reached n, which makes any terminating run a
/// proper permutation.
inline station_program beep_naming_lv(station_context& ctx, lv_config cfg) {
  const i64 lgn = ceil_lg(cfg.n);
  for (;;) {
    ctx.stats.stages += 1;
    i64 counter = 0;
    i64 left = 1;
    i64 right = cfg.n * lgn;
    std::optional<i64> name;
    ctx.name.reset();
    for (;;) {
      ctx.lv_passes.push_back({left, right, 0});
      ctx.mirror.left = left;
      ctx.mirror.right = right;
      ctx.mirror.counter = counter;

      std::optional<i64> slot;
      if (!name) {
        uniform_draw_info draw{};
        slot = ctx.rng().uniform(left, right, &draw);
        ctx.stats.slot_draws += 1;
        ctx.stats.slot_bits += draw.width_bits * draw.attempts;
      }

      for (i64 i = left; i <= right; ++i) {
        const bool mine = slot.has_value() && *slot == i;
        const auto fb =
            co_await ctx.round(mine ? station_action::beep : station_action::pause);
        if (fb == channel_feedback::beep) {
          ctx.lv_passes.back().occupied += 1;
          bool collision = false;
          for (i64 j = 0; j < cfg.beta * lgn; ++j) {
            const auto probe = detail::probe_begin(ctx, mine);
            const auto first = co_await ctx.round(detail::probe_action(probe, 0));
            const auto second = co_await ctx.round(detail::probe_action(probe, 1));
            if (detail::probe_result(ctx, probe, first, second)) collision = true;
          }
          if (!collision) {
            counter += 1;
            ctx.mirror.counter = counter;
            if (mine) {
              name = counter;
              ctx.name = name;
            }
          }
        }
      }

      const auto fb = co_await ctx.round(!name.has_value() ? station_action::beep
                                                           : station_action::pause);
      if (fb != channel_feedback::beep) break;
      left = counter + 1;
      right = counter + (cfg.n - counter) * lgn;
    }
    if (counter == cfg.n) co_return;
  }
}

struct mc_config {
  i64 beta = 2;  // verification calls per bin, times the stage's k
};

/// Monte Carlo naming for unknown n. Stages double the string length k
/// (2, 4, 8, ...); each station draws a fresh k-bit string per stage. The
/// inner loop finds the smallest outstanding string, verifies its holders
/// with beta*k collision probes (any detection latches the stage-wide
/// collision flag), assigns the next name while the stage is still clean,
/// and retires the processed strings; a silent status round ends the stage.
/// The algorithm stops after the first stage with no detected collision, so
/// an undetected one yields duplicate names over a shorter contiguous range.
inline station_program beep_naming_mc(station_context& ctx, mc_config cfg) {
  i64 k = 1;
  for (;;) {
    k *= 2;
    ctx.stats.stages += 1;
    ctx.mc_stages.push_back({k, 0});
    bool collision = false;
    i64 counter = 0;
    std::optional<std::string> mine = ctx.rng().bit_string(k);
    ctx.stats.string_draws += 1;
    ctx.stats.string_bits += k;
    ctx.mirror.k = k;
    ctx.mirror.collision = false;
    ctx.mirror.counter = 0;

    for (;;) {
      ctx.mc_stages.back().iterations += 1;
      const std::string smallest =
          co_await next_string(ctx, k, mine ? &*mine : nullptr);
      if (ctx.mirror_strings) ctx.mirror.smallest = smallest;
      const bool occupant = mine.has_value() && *mine == smallest;

      for (i64 j = 0; j < cfg.beta * k; ++j) {
        const auto probe = detail::probe_begin(ctx, occupant);
        const auto first = co_await ctx.round(detail::probe_action(probe, 0));
        const auto second = co_await ctx.round(detail::probe_action(probe, 1));
        if (detail::probe_result(ctx, probe, first, second)) collision = true;
      }
      ctx.mirror.collision = collision;
      if (!collision) {
        counter += 1;
        ctx.mirror.counter = counter;
        if (occupant) ctx.name = counter;
      }
      if (occupant) mine.reset();

      const auto fb = co_await ctx.round(mine.has_value() ? station_action::beep
                                                          : station_action::pause);
      if (fb != channel_feedback::beep) break;
    }
    if (!collision) co_return;
  }
}

struct naming_outcome {
  std::vector<i64> names;  // observer order; 0 marks a station without a name
  classification_result classification{};
  i64 n_actual = 0;
};

struct trial_options {
  u64 max_rounds = 0;  // 0 = default cap for this n
  bool record_actions = false;
  bool check_mirrors = false;   // compare mirrored variables across stations per round
  bool mirror_strings = false;  // include the smallest-string in the mirror
  bool ledger_check = true;     // closed-form round/bit accounting per trial
  detect_resolver* detect_override = nullptr;
  std::function<void(const round_trace&, const std::vector<station>&)> round_observer;
};

struct trial_result {
  naming_outcome outcome;
  trial_metrics metrics;
  execution_record record;
};

namespace detail {

inline void check_mirrors_equal(const round_trace& t, const std::vector<station>& st) {
  const auto& m0 = st.front().context().mirror;
  const auto& s0 = st.front().context().stats;
  for (const auto& s : st) {
    const auto& m = s.context().mirror;
    const bool same = m.counter == m0.counter && m.left == m0.left &&
                      m.right == m0.right && m.k == m0.k &&
                      m.collision == m0.collision && m.smallest == m0.smallest;
    if (!same)
      throw invariant_violation("mirrored variables diverged at round " +
                                std::to_string(t.round_index));
    if (s.context().stats.detect_calls != s0.detect_calls ||
        s.context().stats.stages != s0.stages)
      throw invariant_violation("mirrored counters diverged at round " +
                                std::to_string(t.round_index));
  }
}

inline engine_options make_engine_options(const trial_options& opt, i64 n) {
  engine_options eng;
  eng.max_rounds = opt.max_rounds ? opt.max_rounds : default_max_rounds(n);
  eng.record_actions = opt.record_actions;
  if (opt.check_mirrors && opt.round_observer) {
    auto user = opt.round_observer;
    eng.round_observer = [user](const round_trace& t, const std::vector<station>& st) {
      check_mirrors_equal(t, st);
      user(t, st);
    };
  } else if (opt.check_mirrors) {
    eng.round_observer = check_mirrors_equal;
  } else {
    eng.round_observer = opt.round_observer;
  }
  return eng;
}

// Round/bit ledger for a known-n run. The predicted round count is rebuilt
// from the pass log and the predicted bit count from per-station event
// tallies; both must match the trace length and the flip counters exactly.
inline void check_lv_ledger(const std::vector<station>& st, const execution_record& rec,
                            i64 n, i64 beta) {
  const i64 lgn = ceil_lg(n);
  const auto& ctx0 = st.front().context();
  i64 predicted_rounds = 0;
  for (const auto& p : ctx0.lv_passes)
    predicted_rounds += (p.right - p.left + 1) + p.occupied * 2 * beta * lgn + 1;
  if (predicted_rounds != static_cast<i64>(rec.trace.size()))
    throw invariant_violation("lv round ledger mismatch");

  for (const auto& s : st) {
    const auto& c = s.context();
    // every thrown ball is verified in exactly one beeped slot
    if (c.stats.detect_flips != beta * lgn * c.stats.slot_draws)
      throw invariant_violation("lv per-station flip ledger mismatch");
    if (c.stats.slot_bits + c.stats.detect_flips !=
        static_cast<i64>(c.rng().bits_consumed()))
      throw invariant_violation("lv bit ledger mismatch");
  }
}

// Ledger for an unknown-n run: per station, string bits are the sum of
// stage lengths and participant flips are beta times that sum; rounds are
// rebuilt from the stage log.
inline void check_mc_ledger(const std::vector<station>& st, const execution_record& rec,
                            i64 beta) {
  const auto& ctx0 = st.front().context();
  i64 predicted_rounds = 0;
  i64 sum_k = 0;
  for (const auto& stage : ctx0.mc_stages) {
    predicted_rounds += stage.iterations * (stage.k + 2 * beta * stage.k + 1);
    sum_k += stage.k;
  }
  if (predicted_rounds != static_cast<i64>(rec.trace.size()))
    throw invariant_violation("mc round ledger mismatch");

  for (const auto& s : st) {
    const auto& c = s.context();
    if (c.stats.string_bits != sum_k)
      throw invariant_violation("mc string-bit ledger mismatch");
    if (c.stats.detect_flips != beta * sum_k)
      throw invariant_violation("mc flip ledger mismatch");
    if (c.stats.string_bits + c.stats.detect_flips !=
        static_cast<i64>(c.rng().bits_consumed()))
      throw invariant_violation("mc bit ledger mismatch");
  }
}

inline trial_result finish_trial(std::vector<station>& st, execution_record rec, i64 n,
                                 u64 seed) {
  trial_result res;
  res.record = std::move(rec);
  res.outcome.n_actual = n;
  res.outcome.names.reserve(st.size());
  i64 total_bits = 0;
  i64 total_draws = 0;
  for (const auto& s : st) {
    res.outcome.names.push_back(s.context().name.value_or(0));
    total_bits += static_cast<i64>(s.context().rng().bits_consumed());
    total_draws += s.context().stats.slot_draws;
  }
  res.outcome.classification = validate_names(res.outcome.names, n);
  const auto& ctx0 = st.front().context();
  res.metrics.rounds = static_cast<i64>(res.record.trace.size());
  res.metrics.bits = total_bits;
  res.metrics.stages = ctx0.stats.stages;
  res.metrics.detect_calls = ctx0.stats.detect_calls;
  res.metrics.slot_draws = total_draws;
  res.metrics.classification = res.outcome.classification;
  res.metrics.seed = seed;
  return res;
}

}  // namespace detail

inline std::vector<station_blueprint> lv_blueprints(i64 n, i64 beta, u64 trial_seed) {
  std::vector<station_blueprint> bps;
  bps.reserve(static_cast<std::size_t>(n));
  lv_config cfg{n, beta};
  for (i64 i = 0; i < n; ++i)
    bps.push_back({derive_stream(trial_seed, static_cast<u64>(i)),
                   [cfg](station_context& ctx) { return beep_naming_lv(ctx, cfg); },
                   nullptr});
  return bps;
}

inline std::vector<station_blueprint> mc_blueprints(i64 n, i64 beta, u64 trial_seed) {
  std::vector<station_blueprint> bps;
  bps.reserve(static_cast<std::size_t>(n));
  mc_config cfg{beta};  // n stays unknown to the stations
  for (i64 i = 0; i < n; ++i)
    bps.push_back({derive_stream(trial_seed, static_cast<u64>(i)),
                   [cfg](station_context& ctx) { return beep_naming_mc(ctx, cfg); },
                   nullptr});
  return bps;
}

inline std::vector<station> make_stations(std::span<const station_blueprint> bps,
                                          const trial_options& opt = {}) {
  std::vector<station> st;
  st.reserve(bps.size());
  for (const auto& bp : bps) {
    st.emplace_back(bp);
    st.back().context().mirror_strings = opt.mirror_strings || opt.check_mirrors;
    st.back().context().detect_override = opt.detect_override;
  }
  return st;
}

/// One seeded known-n naming run: build n stations, drive them to
/// termination, classify the assignment, and check the round/bit ledgers.
inline trial_result run_beep_naming_lv(i64 n, i64 beta, u64 trial_seed,
                                       const trial_options& opt = {}) {
  if (n < 1) throw std::invalid_argument("run_beep_naming_lv: n must be positive");
  if (beta < 0) throw std::invalid_argument("run_beep_naming_lv: beta must be non-negative");
  auto bps = lv_blueprints(n, beta, trial_seed);
  auto st = make_stations(bps, opt);
  lockstep_engine engine(detail::make_engine_options(opt, n));
  auto rec = engine.run(st);
  if (opt.ledger_check) detail::check_lv_ledger(st, rec, n, beta);
  return detail::finish_trial(st, std::move(rec), n, trial_seed);
}

/// One seeded unknown-n naming run; n is used only to build the stations and
/// validate the outcome, never inside the protocol.
inline trial_result run_beep_naming_mc(i64 n, i64 beta, u64 trial_seed,
                                       const trial_options& opt = {}) {
  if (n < 1) throw std::invalid_argument("run_beep_naming_mc: n must be positive");
  if (beta < 0) throw std::invalid_argument("run_beep_naming_mc: beta must be non-negative");
  auto bps = mc_blueprints(n, beta, trial_seed);
  auto st = make_stations(bps, opt);
  lockstep_engine engine(detail::make_engine_options(opt, n));
  auto rec = engine.run(st);
  if (opt.ledger_check) detail::check_mc_ledger(st, rec, beta);
  return detail::finish_trial(st, std::move(rec), n, trial_seed);
}

}  // namespace beepsim
