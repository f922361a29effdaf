// beepsim — lockstep simulator of an anonymous synchronous beeping channel
// with randomized naming protocols and a seeded trial harness.

#include <fstream>
#include <limits>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "beepsim/acceptance.hpp"
#include "beepsim/harness.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_invariant = 2;
constexpr int exit_verify_failed = 3;

struct run_args {
  beepsim::i64 n = 1;
  beepsim::i64 beta = 2;
  beepsim::i64 trials = 1;
  beepsim::u64 seed = 1;
  beepsim::u64 raw_seed = 0;
  bool has_raw_seed = false;
  std::string out_format = "csv";
  std::string output_path;
  std::string trace_path;
  int workers = 0;
  beepsim::u64 max_rounds = 0;
};

CLI::Range positive() {
  return CLI::Range(beepsim::i64{1}, std::numeric_limits<beepsim::i64>::max());
}

void add_run_options(CLI::App* cmd, run_args& args, bool observer_n) {
  cmd->add_option("--n", args.n,
                  observer_n ? "station count (hidden from stations, used to build and "
                               "validate the run)"
                             : "station count, known to every station")
      ->required()
      ->check(positive());
  cmd->add_option("--beta", args.beta, "verification intensity (>= 1)")->check(positive());
  cmd->add_option("--trials", args.trials, "independent trials")->check(positive());
  cmd->add_option("--seed", args.seed, "master seed; per-trial seeds are derived from it");
  cmd->add_option("--raw-seed", args.raw_seed,
                  "run exactly one trial with this trial seed (bypasses derivation)");
  cmd->add_option("--out", args.out_format, "output format")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--output", args.output_path, "write metrics to this file instead of stdout");
  cmd->add_option("--trace", args.trace_path,
                  "write the first trial's round trace (round,beepers,feedback) here");
  cmd->add_option("--workers", args.workers, "worker threads (0 = hardware)");
  cmd->add_option("--max-rounds", args.max_rounds, "override the divergence cap");
}

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << text;
}

int run_protocol(beepsim::protocol_kind protocol, run_args& args, CLI::App* cmd) {
  using namespace beepsim;
  args.has_raw_seed = cmd->count("--raw-seed") > 0;
  campaign_config cfg;
  cfg.protocol = protocol;
  cfg.n_values = {args.n};
  cfg.beta = args.beta;
  cfg.trials = args.has_raw_seed ? 1 : args.trials;
  cfg.master_seed = args.seed;
  cfg.format = args.out_format == "json" ? output_format::json : output_format::csv;
  cfg.workers = args.workers;
  cfg.max_rounds = args.max_rounds;

  campaign_result result;
  if (args.has_raw_seed) {
    result.config = cfg;
    trial_row row;
    row.n = args.n;
    row.metrics = run_one_trial(protocol, args.n, args.beta, args.raw_seed, args.max_rounds);
    result.rows.push_back(row);
    result.summaries.push_back(summarize(args.n, result.rows));
    result.any_diverged = row.metrics.diverged;
  } else {
    result = run_campaign(cfg);
  }

  emit(cfg.format == output_format::json ? campaign_json(result) : metrics_csv(result),
       args.output_path);
  for (const auto& s : result.summaries) std::cerr << summary_text(s) << '\n';

  if (!args.trace_path.empty()) {
    const u64 seed0 = args.has_raw_seed ? args.raw_seed : trial_seed(args.seed, args.n, 0);
    const auto res = protocol == protocol_kind::lv
                         ? run_beep_naming_lv(args.n, args.beta, seed0)
                         : run_beep_naming_mc(args.n, args.beta, seed0);
    std::ofstream out(args.trace_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open trace file: " + args.trace_path);
    write_trace_csv(out, res.record.trace);
  }
  return result.any_diverged ? exit_invariant : exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace beepsim;
  CLI::App app{"beepsim: lockstep beeping-channel simulator and naming-protocol harness"};
  app.require_subcommand(1);

  run_args lv_args, mc_args;
  auto* lv_cmd = app.add_subcommand("lv", "Las Vegas naming runs (station count known)");
  add_run_options(lv_cmd, lv_args, false);
  auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo naming runs (station count unknown)");
  add_run_options(mc_cmd, mc_args, true);

  i64 db_participants = 2, db_calls = 1, db_trials = 10000;
  u64 db_seed = 1;
  int db_workers = 0;
  auto* db_cmd = app.add_subcommand(
      "detect-bench", "empirical non-detection frequency of the two-round collision probe");
  db_cmd->add_option("--participants", db_participants)->required()->check(positive());
  db_cmd->add_option("--calls", db_calls)->required()->check(positive());
  db_cmd->add_option("--trials", db_trials)->check(positive());
  db_cmd->add_option("--seed", db_seed);
  db_cmd->add_option("--workers", db_workers);

  i64 bp_n = 32, bp_trials = 10000;
  u64 bp_seed = 1;
  int bp_workers = 0;
  auto* bp_cmd =
      app.add_subcommand("ball-process", "stand-alone ball process throw statistics");
  bp_cmd->add_option("--n", bp_n)->required()->check(CLI::Range(i64{2}, i64{1} << 20));
  bp_cmd->add_option("--trials", bp_trials)->check(positive());
  bp_cmd->add_option("--seed", bp_seed);
  bp_cmd->add_option("--workers", bp_workers);

  std::string sw_protocol = "lv", sw_nlist, sw_out = "csv", sw_output;
  i64 sw_beta = 2, sw_trials = 100;
  u64 sw_seed = 1;
  int sw_workers = 0;
  u64 sw_max_rounds = 0;
  auto* sw_cmd = app.add_subcommand("sweep", "scaling sweep across station counts");
  sw_cmd->add_option("--protocol", sw_protocol)->check(CLI::IsMember({"lv", "mc"}));
  sw_cmd->add_option("--n-list", sw_nlist, "comma-separated increasing station counts")
      ->required();
  sw_cmd->add_option("--beta", sw_beta)->check(positive());
  sw_cmd->add_option("--trials", sw_trials)->check(positive());
  sw_cmd->add_option("--seed", sw_seed);
  sw_cmd->add_option("--out", sw_out)->check(CLI::IsMember({"csv", "json"}));
  sw_cmd->add_option("--output", sw_output);
  sw_cmd->add_option("--workers", sw_workers);
  sw_cmd->add_option("--max-rounds", sw_max_rounds);

  int vf_workers = 0;
  std::vector<int> vf_only;
  u64 vf_seed = acceptance::default_master_seed;
  auto* vf_cmd = app.add_subcommand("verify", "run the statistical release checks");
  vf_cmd->add_option("--workers", vf_workers);
  vf_cmd->add_option("--only", vf_only, "check numbers to run (default: all)");
  vf_cmd->add_option("--seed", vf_seed, "master seed for the checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (lv_cmd->parsed()) return run_protocol(protocol_kind::lv, lv_args, lv_cmd);
    if (mc_cmd->parsed()) return run_protocol(protocol_kind::mc, mc_args, mc_cmd);

    if (db_cmd->parsed()) {
      const auto res =
          run_detect_bench(db_participants, db_calls, db_trials, db_seed, db_workers);
      const double sigma = binomial_sigma(res.analytic, res.trials);
      std::cout << "participants=" << res.participants << " calls=" << res.calls
                << " trials=" << res.trials << " undetected_freq=" << res.frequency
                << " analytic=" << res.analytic << " sigma=" << sigma << " within_3sigma="
                << (std::abs(res.frequency - res.analytic) <= 3 * sigma ? "yes" : "no")
                << '\n';
      return exit_ok;
    }

    if (bp_cmd->parsed()) {
      const auto res = run_ball_bench(bp_n, bp_trials, bp_seed, bp_workers);
      std::cout << "n=" << res.n << " trials=" << res.trials
                << " mean_throws=" << res.mean_throws << " max_throws=" << res.max_throws
                << " over_3n=" << res.over_3n << " frac_over=" << res.frac_over << '\n';
      return exit_ok;
    }

    if (sw_cmd->parsed()) {
      campaign_config cfg;
      cfg.protocol = sw_protocol == "lv" ? protocol_kind::lv : protocol_kind::mc;
      std::stringstream ss(sw_nlist);
      std::string item;
      while (std::getline(ss, item, ',')) cfg.n_values.push_back(std::stoll(item));
      for (std::size_t i = 1; i < cfg.n_values.size(); ++i)
        if (cfg.n_values[i] <= cfg.n_values[i - 1])
          throw CLI::ValidationError("--n-list", "values must be increasing");
      cfg.beta = sw_beta;
      cfg.trials = sw_trials;
      cfg.master_seed = sw_seed;
      cfg.workers = sw_workers;
      cfg.max_rounds = sw_max_rounds;
      const auto result = run_campaign(cfg);
      if (sw_out == "json")
        emit(campaign_json(result), sw_output);
      else
        emit(sweep_csv(result), sw_output);
      return result.any_diverged ? exit_invariant : exit_ok;
    }

    if (vf_cmd->parsed()) {
      acceptance::options opt;
      opt.workers = vf_workers;
      opt.master_seed = vf_seed;
      opt.only.insert(vf_only.begin(), vf_only.end());
      const int failures = acceptance::run_acceptance(opt, std::cout);
      return failures == 0 ? exit_ok : exit_verify_failed;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const beepsim::invariant_violation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return exit_invariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_invariant;
  }
  return exit_usage;
}
