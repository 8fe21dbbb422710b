#include "ranklab/harness.hpp"

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ranklab/oracles.hpp"

using namespace ranklab;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig config;
  config.synthetic_queries = 6;
  config.synthetic_docs = 4;
  config.synthetic_dim = 4;
  config.ranker_train_queries = 6;
  config.num_pairs = 2;
  config.methods = {Method::kAB, Method::kTDI, Method::kPI, Method::kOI,
                    Method::kIPSUniform, Method::kIPSAB};
  config.budget = 400;
  config.checkpoints = {200, 400};
  config.seed = 7;
  config.sim.display_length = 3;
  return config;
}

}  // namespace

TEST_CASE("method names round-trip") {
  for (Method m : {Method::kAB, Method::kTDI, Method::kPI, Method::kOI, Method::kIPSUniform,
                   Method::kIPSAB, Method::kIPSLogOpt, Method::kIPSOracleLogOpt}) {
    CHECK(method_from_name(method_name(m)) == m);
  }
  CHECK_THROWS_AS(method_from_name("nope"), InvalidInputError);
}

TEST_CASE("config parsing and overrides") {
  std::istringstream in(
      "# comment\n"
      "budget = 5000\n"
      "methods = ab, tdi\n"
      "checkpoints = 100,1000,5000\n"
      "display_length = 4\n"
      "epsilon = 0.2\n");
  const ExperimentConfig config = parse_experiment_config(in, {"budget=6000", "seed=9"});
  CHECK(config.budget == 6000);
  CHECK(config.seed == 9);
  CHECK(config.methods == std::vector<Method>{Method::kAB, Method::kTDI});
  CHECK(config.checkpoints == std::vector<std::int64_t>{100, 1000, 5000});
  CHECK(config.sim.display_length == 4);
  CHECK(config.opt.epsilon == 0.2);

  std::istringstream bad("budget\n");
  CHECK_THROWS_AS(parse_experiment_config(bad), ParseError);
  std::istringstream unknown("no_such_key = 1\n");
  CHECK_THROWS_AS(parse_experiment_config(unknown), InvalidInputError);
}

TEST_CASE("config validation") {
  ExperimentConfig config = small_config();
  config.checkpoints = {200, 100};
  CHECK_THROWS_AS(config.validate(), InvalidInputError);
  config.checkpoints = {200, 800};
  CHECK_THROWS_AS(config.validate(), InvalidInputError);
  config.checkpoints = {};
  CHECK_NOTHROW(config.validate());
}

TEST_CASE("run_experiment emits one row per (pair, method, checkpoint)") {
  ExperimentConfig config = small_config();
  const ExperimentResult result = run_experiment(config);
  CHECK(result.rows.size() ==
        config.methods.size() * static_cast<std::size_t>(config.num_pairs) * 2);
  for (const ResultRow& row : result.rows) {
    CHECK_FALSE(row.failed);
    CHECK((row.queries == 200 || row.queries == 400));
    CHECK(row.mse >= 0.0);
  }
  CHECK(result.timings.size() == config.methods.size() * config.num_pairs);
}

TEST_CASE("single-pair single-method single-checkpoint run has exactly one row") {
  ExperimentConfig config = small_config();
  config.num_pairs = 1;
  config.methods = {Method::kAB};
  config.budget = 1000;
  config.checkpoints = {1000};
  const ExperimentResult result = run_experiment(config);
  CHECK(result.rows.size() == 1);
}

TEST_CASE("identical config and seed produce byte-identical results.csv") {
  ExperimentConfig config = small_config();
  config.methods = {Method::kAB, Method::kIPSUniform, Method::kIPSLogOpt};
  config.budget = 300;
  config.checkpoints = {300};
  config.opt.steps = 40;
  config.opt.update_schedule = {150};
  config.opt.rho_refresh_samples = 200;

  std::ostringstream first, second;
  write_results_csv(run_experiment(config).rows, first);
  write_results_csv(run_experiment(config).rows, second);
  CHECK(first.str() == second.str());

  SUBCASE("and results are independent of the thread count") {
    ExperimentConfig threaded = config;
    threaded.threads = 4;
    std::ostringstream parallel;
    write_results_csv(run_experiment(threaded).rows, parallel);
    CHECK(parallel.str() == first.str());
  }
}

TEST_CASE("run_method on the fixed three-doc fixture matches the oracles") {
  const SmallInstance inst = SmallInstance::three_doc({1.0, 0.9, 0.8}, 0.1, 1.0);
  const ClickModel model = inst.click_model();
  const QueryDistribution dist = inst.distribution();
  const FixedRankingPolicy p1 = inst.policy1();
  const FixedRankingPolicy p2 = inst.policy2();

  ComparisonSetup setup;
  setup.dist = &dist;
  setup.model = &model;
  setup.policy1 = &p1;
  setup.policy2 = &p2;
  setup.true_delta = inst.true_delta();

  SUBCASE("tdi converges to the biased enumerated value") {
    RandomStream rng(11);
    const std::int64_t cps[] = {100000};
    const auto estimates = run_method(setup, Method::kTDI, 100000, cps, rng);
    REQUIRE(estimates.size() == 1);
    CHECK(std::abs(estimates[0].series.mean() - 0.057) < 0.01);
  }

  SUBCASE("ips-uniform converges to the true delta") {
    RandomStream rng(12);
    const std::int64_t cps[] = {100000};
    const auto estimates = run_method(setup, Method::kIPSUniform, 100000, cps, rng);
    CHECK(std::abs(estimates[0].series.mean() - (-0.08)) < 0.01);
  }

  SUBCASE("ips-ab converges to the true delta") {
    RandomStream rng(13);
    const std::int64_t cps[] = {100000};
    const auto estimates = run_method(setup, Method::kIPSAB, 100000, cps, rng);
    CHECK(std::abs(estimates[0].series.mean() - (-0.08)) < 0.01);
  }
}

TEST_CASE("summarize aggregates rows and bins errors by delta magnitude") {
  std::vector<ResultRow> rows;
  auto push = [&](int pair, Method m, std::int64_t queries, double bin_err, double delta) {
    ResultRow row;
    row.pair = pair;
    row.method = m;
    row.queries = queries;
    row.binary_error = bin_err;
    row.absolute_error = 0.1;
    row.mse = 0.2;
    row.true_delta = delta;
    row.delta_hat = 0.0;
    rows.push_back(row);
  };
  push(0, Method::kAB, 100, 0.0, 0.005);
  push(1, Method::kAB, 100, 1.0, 0.05);
  const SummaryTables tables = summarize(rows);
  REQUIRE(tables.by_checkpoint.size() == 1);
  CHECK(tables.by_checkpoint[0].mean_binary_error == doctest::Approx(0.5));
  CHECK(tables.by_checkpoint[0].cells == 2);
  REQUIRE(tables.by_delta_bin.size() == 2);
  CHECK(tables.by_delta_bin[0].bin == "<0.01");

  SUBCASE("error rows are excluded from means but counted") {
    ResultRow failed;
    failed.pair = 2;
    failed.method = Method::kAB;
    failed.failed = true;
    failed.error = "boom";
    rows.push_back(failed);
    const SummaryTables with_errors = summarize(rows);
    CHECK(with_errors.error_cells == 1);
    CHECK(with_errors.by_checkpoint[0].cells == 2);
  }

  SUBCASE("a single row summarizes to itself") {
    const SummaryTables one = summarize({rows[0]});
    CHECK(one.by_checkpoint[0].mean_binary_error == 0.0);
    CHECK(one.by_checkpoint[0].mean_absolute_error == doctest::Approx(0.1));
  }
}

TEST_CASE("results csv round-trips including error rows") {
  std::vector<ResultRow> rows;
  ResultRow good;
  good.pair = 0;
  good.method = Method::kTDI;
  good.queries = 100;
  good.binary_error = 1;
  good.absolute_error = 0.137;
  good.mse = 0.31;
  good.true_delta = -0.08;
  good.delta_hat = 0.057;
  rows.push_back(good);
  ResultRow bad;
  bad.pair = 1;
  bad.method = Method::kOI;
  bad.failed = true;
  bad.error = "infeasible plan";
  rows.push_back(bad);

  std::stringstream buffer;
  write_results_csv(rows, buffer);
  const std::vector<ResultRow> loaded = read_results_csv(buffer);
  REQUIRE(loaded.size() == 2);
  CHECK_FALSE(loaded[0].failed);
  CHECK(loaded[0].delta_hat == doctest::Approx(0.057));
  CHECK(loaded[1].failed);
}

TEST_CASE("interaction logs round-trip through the line format") {
  InteractionLog log;
  InteractionRecord rec;
  rec.query_id = 12;
  rec.ranking.docs = {2, 0, 1};
  rec.clicks = {0, 1, 0};
  log.records.push_back(rec);
  rec.query_id = 3;
  rec.ranking.docs = {1};
  rec.clicks = {1};
  log.records.push_back(rec);

  std::stringstream buffer;
  write_interaction_log(log, buffer);
  CHECK(buffer.str() == "12\t2,0,1\t0,1,0\n3\t1\t1\n");
  const InteractionLog loaded = read_interaction_log(buffer);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.records[0].ranking.docs == std::vector<DocId>{2, 0, 1});
  CHECK(loaded.records[1].query_id == 3);

  std::stringstream bad("5\t0,1\t0\n");
  CHECK_THROWS_AS(read_interaction_log(bad), ParseError);
}

TEST_CASE("curves svg renders a plot per metric") {
  ExperimentConfig config = small_config();
  config.methods = {Method::kAB, Method::kTDI};
  const ExperimentResult result = run_experiment(config);
  std::ostringstream svg;
  write_curves_svg(result.rows, svg);
  const std::string text = svg.str();
  CHECK(text.find("<svg") != std::string::npos);
  CHECK(text.find("mean squared error") != std::string::npos);
  CHECK(text.find("polyline") != std::string::npos);
  CHECK(text.find(">ab<") != std::string::npos);
}

TEST_CASE("mse of unbiased methods trends down with more queries") {
  ExperimentConfig config = small_config();
  config.methods = {Method::kAB, Method::kIPSUniform};
  config.num_pairs = 4;
  config.budget = 2000;
  config.checkpoints = {100, 2000};
  const ExperimentResult result = run_experiment(config);
  const SummaryTables tables = summarize(result.rows);
  for (Method m : config.methods) {
    double early = 0.0, late = 0.0;
    for (const MethodSummary& s : tables.by_checkpoint) {
      if (s.method != m) continue;
      (s.queries == 100 ? early : late) = s.mean_mse;
    }
    CHECK(late <= early * 1.25 + 1e-9);  // statistical trend, not per pair
  }
}
