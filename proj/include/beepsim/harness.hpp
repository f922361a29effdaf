#pragma once

#include <atomic>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "beepsim/protocols.hpp"
#include "beepsim/stats.hpp"

namespace beepsim {

enum class protocol_kind : unsigned char { lv, mc };

inline const char* to_string(protocol_kind p) { return p == protocol_kind::lv ? "lv" : "mc"; }

enum class output_format : unsigned char { csv, json };

/// Seed of trial `index` in a campaign over `n` stations:
///   trial_seed = mix64(mix64(master ^ GAMMA*n) + GAMMA*(index+1))
/// with GAMMA = 0x9E3779B97F4A7C15. Any CSV row can be replayed alone by
/// feeding its seed back through --raw-seed.
constexpr u64 trial_seed(u64 master, i64 n, i64 index) {
  return mix64(mix64(master ^ (golden_gamma * static_cast<u64>(n))) +
               golden_gamma * (static_cast<u64>(index) + 1));
}

struct campaign_config {
  protocol_kind protocol = protocol_kind::lv;
  std::vector<i64> n_values;
  i64 beta = 2;
  i64 trials = 1;
  u64 master_seed = 1;
  output_format format = output_format::csv;
  int workers = 0;      // 0 = hardware concurrency
  u64 max_rounds = 0;   // 0 = per-n default cap
};

struct trial_row {
  i64 n = 0;
  trial_metrics metrics{};
};

struct n_summary {
  i64 n = 0;
  i64 trials = 0;
  double rounds_mean = 0, rounds_median = 0;
  i64 rounds_max = 0;
  double bits_mean = 0, bits_median = 0;
  i64 bits_max = 0;
  double rounds_ratio_median = 0;  // median rounds / (n * ceil_lg n)
  double bits_ratio_median = 0;
  i64 errors = 0;  // classification != proper, or diverged
  double error_freq = 0;
  wilson_interval error_interval{};
  i64 diverged = 0;
  i64 one_stage_runs = 0;
};

struct campaign_result {
  campaign_config config;
  std::vector<trial_row> rows;       // (n, trial) order
  std::vector<n_summary> summaries;  // one per n
  bool any_diverged = false;
};

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Run fn(0..count-1) across `workers` threads. Each index is claimed by
/// exactly one thread; the first exception is rethrown after the join.
template <typename Fn>
void parallel_for(i64 count, int workers, Fn&& fn) {
  workers = resolve_workers(workers);
  if (workers <= 1 || count <= 1) {
    for (i64 i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<i64> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const i64 i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int spawn = static_cast<int>(std::min<i64>(workers, count));
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int w = 0; w < spawn; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline trial_metrics run_one_trial(protocol_kind protocol, i64 n, i64 beta, u64 seed,
                                   u64 max_rounds) {
  trial_options opt;
  opt.max_rounds = max_rounds;
  try {
    auto res = protocol == protocol_kind::lv ? run_beep_naming_lv(n, beta, seed, opt)
                                             : run_beep_naming_mc(n, beta, seed, opt);
    return res.metrics;
  } catch (const divergence_error& e) {
    trial_metrics m;
    m.rounds = static_cast<i64>(e.partial().trace.size());
    m.seed = seed;
    m.diverged = true;
    m.classification = {name_classification::invalid, 0};
    return m;
  }
}

/// Aggregate rows that share one n value. Pure and order-independent: any
/// permutation of the rows yields the same summary.
inline n_summary summarize(i64 n, std::span<const trial_row> rows) {
  n_summary s;
  s.n = n;
  s.trials = static_cast<i64>(rows.size());
  if (rows.empty()) return s;
  std::vector<double> rounds, bits;
  rounds.reserve(rows.size());
  bits.reserve(rows.size());
  const double norm = static_cast<double>(n) * static_cast<double>(ceil_lg(n));
  for (const auto& r : rows) {
    rounds.push_back(static_cast<double>(r.metrics.rounds));
    bits.push_back(static_cast<double>(r.metrics.bits));
    s.rounds_max = std::max(s.rounds_max, r.metrics.rounds);
    s.bits_max = std::max(s.bits_max, r.metrics.bits);
    const bool error = r.metrics.diverged ||
                       r.metrics.classification.kind != name_classification::proper;
    s.errors += error ? 1 : 0;
    s.diverged += r.metrics.diverged ? 1 : 0;
    s.one_stage_runs += (!r.metrics.diverged && r.metrics.stages == 1) ? 1 : 0;
  }
  s.rounds_mean = mean_of(rounds);
  s.rounds_median = median_of(rounds);
  s.bits_mean = mean_of(bits);
  s.bits_median = median_of(bits);
  s.rounds_ratio_median = s.rounds_median / norm;
  s.bits_ratio_median = s.bits_median / norm;
  s.error_freq = static_cast<double>(s.errors) / static_cast<double>(s.trials);
  s.error_interval = wilson(s.errors, s.trials);
  return s;
}

/// Seeded trial campaign: `trials` independent runs per n, executed across
/// worker threads, each reproducible from its own derived seed.
inline campaign_result run_campaign(const campaign_config& cfg) {
  if (cfg.trials < 1) throw std::invalid_argument("run_campaign: trials must be >= 1");
  if (cfg.n_values.empty()) throw std::invalid_argument("run_campaign: no n values");
  for (i64 n : cfg.n_values)
    if (n < 1) throw std::invalid_argument("run_campaign: n must be >= 1");

  campaign_result result;
  result.config = cfg;
  result.rows.resize(static_cast<std::size_t>(cfg.trials) * cfg.n_values.size());
  for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
    const i64 n = cfg.n_values[ni];
    trial_row* base = result.rows.data() + ni * static_cast<std::size_t>(cfg.trials);
    parallel_for(cfg.trials, cfg.workers, [&, n, base](i64 t) {
      const u64 seed = trial_seed(cfg.master_seed, n, t);
      base[t].n = n;
      base[t].metrics = run_one_trial(cfg.protocol, n, cfg.beta, seed, cfg.max_rounds);
    });
    auto span = std::span<const trial_row>(base, static_cast<std::size_t>(cfg.trials));
    result.summaries.push_back(summarize(n, span));
    result.any_diverged = result.any_diverged || result.summaries.back().diverged > 0;
  }
  return result;
}

inline constexpr const char* metrics_csv_header =
    "protocol,n,beta,seed,rounds,bits,stages,detect_calls,classification";

inline std::string metrics_csv_row(protocol_kind protocol, i64 beta, const trial_row& row) {
  std::ostringstream os;
  os << to_string(protocol) << ',' << row.n << ',' << beta << ',' << row.metrics.seed
     << ',' << row.metrics.rounds << ',' << row.metrics.bits << ',' << row.metrics.stages
     << ',' << row.metrics.detect_calls << ','
     << (row.metrics.diverged ? std::string("diverged")
                              : to_string(row.metrics.classification));
  return os.str();
}

inline std::string metrics_csv(const campaign_result& result) {
  std::ostringstream os;
  os << metrics_csv_header << '\n';
  for (const auto& row : result.rows)
    os << metrics_csv_row(result.config.protocol, result.config.beta, row) << '\n';
  return os.str();
}

inline std::string summary_text(const n_summary& s) {
  std::ostringstream os;
  os << "n=" << s.n << " trials=" << s.trials << " rounds(mean/median/max)="
     << s.rounds_mean << '/' << s.rounds_median << '/' << s.rounds_max
     << " bits(mean/median/max)=" << s.bits_mean << '/' << s.bits_median << '/'
     << s.bits_max << " rounds_ratio=" << s.rounds_ratio_median
     << " bits_ratio=" << s.bits_ratio_median << " errors=" << s.errors
     << " error_freq=" << s.error_freq << " wilson=[" << s.error_interval.lo << ','
     << s.error_interval.hi << "]" << " diverged=" << s.diverged;
  return os.str();
}

inline nlohmann::json summary_json(const n_summary& s) {
  return {{"n", s.n},
          {"trials", s.trials},
          {"rounds", {{"mean", s.rounds_mean}, {"median", s.rounds_median}, {"max", s.rounds_max}}},
          {"bits", {{"mean", s.bits_mean}, {"median", s.bits_median}, {"max", s.bits_max}}},
          {"rounds_ratio_median", s.rounds_ratio_median},
          {"bits_ratio_median", s.bits_ratio_median},
          {"errors", s.errors},
          {"error_freq", s.error_freq},
          {"error_wilson", {{"lo", s.error_interval.lo}, {"hi", s.error_interval.hi}}},
          {"diverged", s.diverged},
          {"one_stage_runs", s.one_stage_runs}};
}

inline std::string campaign_json(const campaign_result& result) {
  nlohmann::json doc;
  doc["protocol"] = to_string(result.config.protocol);
  doc["beta"] = result.config.beta;
  doc["trials"] = result.config.trials;
  doc["master_seed"] = result.config.master_seed;
  doc["n_values"] = result.config.n_values;
  auto rows = nlohmann::json::array();
  for (const auto& row : result.rows)
    rows.push_back({{"n", row.n},
                    {"seed", row.metrics.seed},
                    {"rounds", row.metrics.rounds},
                    {"bits", row.metrics.bits},
                    {"stages", row.metrics.stages},
                    {"detect_calls", row.metrics.detect_calls},
                    {"classification", row.metrics.diverged
                                           ? std::string("diverged")
                                           : to_string(row.metrics.classification)}});
  doc["trials_detail"] = std::move(rows);
  auto summaries = nlohmann::json::array();
  for (const auto& s : result.summaries) summaries.push_back(summary_json(s));
  doc["summaries"] = std::move(summaries);
  return doc.dump(2) + "\n";
}

inline constexpr const char* sweep_csv_header =
    "protocol,beta,n,trials,rounds_median,bits_median,rounds_ratio,bits_ratio,errors,"
    "error_freq";

/// One row per n with normalized medians; n values must be increasing.
inline std::string sweep_csv(const campaign_result& result) {
  for (std::size_t i = 1; i < result.config.n_values.size(); ++i)
    if (result.config.n_values[i] <= result.config.n_values[i - 1])
      throw std::invalid_argument("sweep: n values must be increasing");
  std::ostringstream os;
  os << sweep_csv_header << '\n';
  for (const auto& s : result.summaries)
    os << to_string(result.config.protocol) << ',' << result.config.beta << ',' << s.n
       << ',' << s.trials << ',' << s.rounds_median << ',' << s.bits_median << ','
       << s.rounds_ratio_median << ',' << s.bits_ratio_median << ',' << s.errors << ','
       << s.error_freq << '\n';
  return os.str();
}

/// Record one full trial and replay every station against the trace alone.
inline bool audit_protocol_trial(protocol_kind protocol, i64 n, i64 beta, u64 seed) {
  trial_options opt;
  opt.record_actions = true;
  const auto bps = protocol == protocol_kind::lv ? lv_blueprints(n, beta, seed)
                                                 : mc_blueprints(n, beta, seed);
  auto st = make_stations(bps, opt);
  lockstep_engine engine(detail::make_engine_options(opt, n));
  auto rec = engine.run(st);
  return isolation_audit(rec, bps);
}

/// Bench program: take part in exactly one of `calls` collision probes and
/// record whether any probe in the series detected a collision.
inline proto_task<void> detect_series_program(station_context& ctx, i64 my_call, i64 calls) {
  bool any = false;
  for (i64 j = 0; j < calls; ++j) {
    const bool detected = co_await detect_collision(ctx, j == my_call);
    any = any || detected;
  }
  ctx.bench_result = any ? 1 : 0;
  co_return;
}

struct detect_bench_result {
  i64 participants = 0;
  i64 calls = 0;
  i64 trials = 0;
  i64 all_undetected = 0;  // trials in which no probe detected a collision
  double frequency = 0;
  double analytic = 0;  // 2^(calls - participants)
};

/// Empirical non-detection frequency for `participants` stations spread as
/// evenly as possible over `calls` time-disjoint probes.
inline detect_bench_result run_detect_bench(i64 participants, i64 calls, i64 trials,
                                            u64 master_seed, int workers = 0) {
  if (participants < 1 || calls < 1 || calls > participants || trials < 1)
    throw std::invalid_argument("detect bench: need 1 <= calls <= participants, trials >= 1");
  std::atomic<i64> undetected{0};
  parallel_for(trials, workers, [&](i64 t) {
    const u64 seed = trial_seed(master_seed, participants, t);
    std::vector<station_blueprint> bps;
    bps.reserve(static_cast<std::size_t>(participants));
    for (i64 i = 0; i < participants; ++i) {
      const i64 my_call = i * calls / participants;
      bps.push_back({derive_stream(seed, static_cast<u64>(i)),
                     [my_call, calls](station_context& ctx) {
                       return detect_series_program(ctx, my_call, calls);
                     },
                     nullptr});
    }
    auto st = make_stations(bps);
    lockstep_engine engine;
    engine.run(st);
    if (st.front().context().bench_result == 0) undetected.fetch_add(1);
  });
  detect_bench_result res;
  res.participants = participants;
  res.calls = calls;
  res.trials = trials;
  res.all_undetected = undetected.load();
  res.frequency = static_cast<double>(res.all_undetected) / static_cast<double>(trials);
  res.analytic = undetected_collision_probability(participants, calls);
  return res;
}

struct ball_bench_result {
  i64 n = 0;
  i64 trials = 0;
  i64 over_3n = 0;  // runs whose total throws exceeded 3n
  double frac_over = 0;
  double mean_throws = 0;
  i64 max_throws = 0;
};

/// Repeated stand-alone ball-process runs with throw-count statistics.
inline ball_bench_result run_ball_bench(i64 n, i64 trials, u64 master_seed,
                                        int workers = 0) {
  if (trials < 1) throw std::invalid_argument("ball bench: trials must be >= 1");
  std::atomic<i64> over{0}, total{0}, max_seen{0};
  parallel_for(trials, workers, [&](i64 t) {
    counted_random_source src(trial_seed(master_seed, n, t));
    const auto res = run_ball_process(n, src);
    if (res.total_throws > 3 * n) over.fetch_add(1);
    total.fetch_add(res.total_throws);
    i64 cur = max_seen.load();
    while (res.total_throws > cur &&
           !max_seen.compare_exchange_weak(cur, res.total_throws)) {
    }
  });
  ball_bench_result res;
  res.n = n;
  res.trials = trials;
  res.over_3n = over.load();
  res.frac_over = static_cast<double>(res.over_3n) / static_cast<double>(trials);
  res.mean_throws = static_cast<double>(total.load()) / static_cast<double>(trials);
  res.max_throws = max_seen.load();
  return res;
}

}  // namespace beepsim
