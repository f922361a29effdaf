#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include <json.hpp>

#include "beepsim/harness.hpp"

using namespace beepsim;

TEST_CASE("trial seeds are stable, distinct, and replayable") {
  CHECK(trial_seed(1, 16, 0) == trial_seed(1, 16, 0));
  CHECK(trial_seed(1, 16, 0) != trial_seed(1, 16, 1));
  CHECK(trial_seed(1, 16, 0) != trial_seed(1, 64, 0));
  CHECK(trial_seed(1, 16, 0) != trial_seed(2, 16, 0));
  // a row's seed replays that row exactly
  const u64 seed = trial_seed(99, 8, 3);
  const auto direct = run_beep_naming_lv(8, 2, seed);
  campaign_config cfg;
  cfg.protocol = protocol_kind::lv;
  cfg.n_values = {8};
  cfg.beta = 2;
  cfg.trials = 4;
  cfg.master_seed = 99;
  cfg.workers = 1;
  const auto result = run_campaign(cfg);
  CHECK(result.rows[3].metrics.seed == seed);
  CHECK(result.rows[3].metrics.rounds == direct.metrics.rounds);
  CHECK(result.rows[3].metrics.bits == direct.metrics.bits);
}

TEST_CASE("campaigns are byte-identical across runs and worker counts") {
  campaign_config cfg;
  cfg.protocol = protocol_kind::mc;
  cfg.n_values = {4, 8};
  cfg.beta = 2;
  cfg.trials = 10;
  cfg.master_seed = 7;
  cfg.workers = 1;
  const auto csv1 = metrics_csv(run_campaign(cfg));
  cfg.workers = 4;
  const auto csv2 = metrics_csv(run_campaign(cfg));
  CHECK(csv1 == csv2);
  const auto json1 = campaign_json(run_campaign(cfg));
  const auto json2 = campaign_json(run_campaign(cfg));
  CHECK(json1 == json2);
}

TEST_CASE("metrics CSV carries the fixed schema") {
  campaign_config cfg;
  cfg.protocol = protocol_kind::lv;
  cfg.n_values = {4};
  cfg.beta = 2;
  cfg.trials = 3;
  cfg.master_seed = 5;
  const auto result = run_campaign(cfg);
  const auto csv = metrics_csv(result);
  CHECK(csv.rfind("protocol,n,beta,seed,rounds,bits,stages,detect_calls,classification\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows
  CHECK(csv.find("lv,4,2,") != std::string::npos);
  CHECK(csv.find("proper") != std::string::npos);
}

TEST_CASE("summaries are order-independent") {
  campaign_config cfg;
  cfg.protocol = protocol_kind::mc;
  cfg.n_values = {8};
  cfg.beta = 1;
  cfg.trials = 40;
  cfg.master_seed = 11;
  const auto result = run_campaign(cfg);
  auto rows = result.rows;
  std::mt19937_64 gen(3);
  std::shuffle(rows.begin(), rows.end(), gen);
  const auto a = summarize(8, result.rows);
  const auto b = summarize(8, rows);
  CHECK(a.rounds_mean == b.rounds_mean);
  CHECK(a.rounds_median == b.rounds_median);
  CHECK(a.bits_median == b.bits_median);
  CHECK(a.errors == b.errors);
  CHECK(a.error_interval.lo == b.error_interval.lo);
}

TEST_CASE("wilson interval matches reference values") {
  const auto zero = wilson(0, 100);
  CHECK(zero.lo == doctest::Approx(0.0));
  CHECK(zero.hi == doctest::Approx(0.03699).epsilon(1e-3));
  const auto half = wilson(50, 100);
  CHECK(half.lo == doctest::Approx(0.40383).epsilon(1e-3));
  CHECK(half.hi == doctest::Approx(0.59617).epsilon(1e-3));
  CHECK_THROWS_AS(wilson(0, 0), std::domain_error);
}

TEST_CASE("median handles odd and even samples") {
  CHECK(median_of({3, 1, 2}) == doctest::Approx(2));
  CHECK(median_of({4, 1, 2, 3}) == doctest::Approx(2.5));
  CHECK_THROWS_AS(median_of({}), std::domain_error);
}

TEST_CASE("campaign validates its configuration") {
  campaign_config cfg;
  cfg.n_values = {};
  CHECK_THROWS_AS(run_campaign(cfg), std::invalid_argument);
  cfg.n_values = {4};
  cfg.trials = 0;
  CHECK_THROWS_AS(run_campaign(cfg), std::invalid_argument);
  cfg.trials = 1;
  cfg.n_values = {0};
  CHECK_THROWS_AS(run_campaign(cfg), std::invalid_argument);
}

TEST_CASE("sweep emits one row per n and requires increasing n") {
  campaign_config cfg;
  cfg.protocol = protocol_kind::lv;
  cfg.n_values = {4, 8};
  cfg.beta = 2;
  cfg.trials = 5;
  cfg.master_seed = 13;
  const auto result = run_campaign(cfg);
  const auto csv = sweep_csv(result);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows
  CHECK(csv.rfind(sweep_csv_header, 0) == 0);

  auto bad = result;
  bad.config.n_values = {8, 4};
  CHECK_THROWS_AS(sweep_csv(bad), std::invalid_argument);
}

TEST_CASE("diverged trials are recorded and flagged, campaign continues") {
  campaign_config cfg;
  cfg.protocol = protocol_kind::lv;
  cfg.n_values = {8};
  cfg.beta = 2;
  cfg.trials = 5;
  cfg.master_seed = 21;
  cfg.max_rounds = 2;  // everything diverges
  const auto result = run_campaign(cfg);
  CHECK(result.any_diverged);
  CHECK(result.summaries.front().diverged == 5);
  const auto csv = metrics_csv(result);
  CHECK(csv.find("diverged") != std::string::npos);
}

TEST_CASE("campaign json round-trips through a parser") {
  campaign_config cfg;
  cfg.protocol = protocol_kind::mc;
  cfg.n_values = {4};
  cfg.beta = 2;
  cfg.trials = 3;
  cfg.master_seed = 17;
  const auto text = campaign_json(run_campaign(cfg));
  const auto doc = nlohmann::json::parse(text);
  CHECK(doc["protocol"] == "mc");
  CHECK(doc["trials_detail"].size() == 3);
  CHECK(doc["summaries"].size() == 1);
  CHECK(doc["summaries"][0].contains("error_wilson"));
}

TEST_CASE("isolation audits pass for both protocols") {
  for (i64 i = 0; i < 10; ++i) {
    CHECK(audit_protocol_trial(protocol_kind::lv, 8, 2, trial_seed(8, 8, i)));
    CHECK(audit_protocol_trial(protocol_kind::mc, 8, 2, trial_seed(9, 8, i)));
  }
}

TEST_CASE("detect bench validates its arguments") {
  CHECK_THROWS_AS(run_detect_bench(2, 3, 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(run_detect_bench(2, 0, 10, 1), std::invalid_argument);
  const auto res = run_detect_bench(3, 3, 50, 1);
  CHECK(res.frequency == doctest::Approx(1.0));  // singleton calls never detect
}
