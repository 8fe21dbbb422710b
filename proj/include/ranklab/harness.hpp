#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ranklab/click_sim.hpp"
#include "ranklab/core.hpp"
#include "ranklab/dataset.hpp"
#include "ranklab/estimators.hpp"
#include "ranklab/interleaving.hpp"
#include "ranklab/logopt.hpp"
#include "ranklab/policies.hpp"

namespace ranklab {

enum class Method {
  kAB,
  kTDI,
  kPI,
  kOI,
  kIPSUniform,
  kIPSAB,
  kIPSLogOpt,
  kIPSOracleLogOpt,
};

std::string method_name(Method method);
Method method_from_name(const std::string& name);

struct ExperimentConfig {
  // Dataset: a LETOR file, or synthetic when the path is empty.
  std::string dataset_file;
  int synthetic_queries = 50;
  int synthetic_docs = 5;
  int synthetic_dim = 8;

  // Ranker pairs under comparison.
  int ranker_train_queries = 25;
  double feature_fraction = 0.5;
  int num_pairs = 10;

  std::vector<Method> methods = {Method::kAB, Method::kTDI, Method::kPI, Method::kOI,
                                 Method::kIPSUniform};
  std::int64_t budget = 10000;
  std::vector<std::int64_t> checkpoints;  // empty: decades up to the budget

  std::uint64_t seed = 1;
  SimulationConfig sim;
  OptimizerConfig opt;
  PIConfig pi;
  int exposure_samples = 10000;  // MC exposure when a query exceeds the cap
  int threads = 1;
  bool svg = false;

  void validate() const;
};

// Line-oriented `key = value` text; '#' starts a comment. Later `--set`
// style overrides win.
ExperimentConfig parse_experiment_config(std::istream& in,
                                         const std::vector<std::string>& overrides = {});
void apply_config_override(ExperimentConfig& config, const std::string& key,
                           const std::string& value);

struct ResultRow {
  int pair = 0;
  Method method = Method::kAB;
  std::int64_t queries = 0;
  double binary_error = 0.0;
  double absolute_error = 0.0;
  double mse = 0.0;
  double true_delta = 0.0;
  double delta_hat = 0.0;
  bool failed = false;
  std::string error;
};

struct CellTiming {
  int pair = 0;
  Method method = Method::kAB;
  double seconds = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<CellTiming> timings;
};

// One fixed comparison: query distribution, true click model, the two
// deterministic rankers, and the true CTR difference.
struct ComparisonSetup {
  const QueryDistribution* dist = nullptr;
  const ClickModel* model = nullptr;
  const DeterministicPolicy* policy1 = nullptr;
  const DeterministicPolicy* policy2 = nullptr;
  double true_delta = 0.0;
  OptimizerConfig opt;
  PIConfig pi;
  int exposure_samples = 10000;
};

struct CheckpointEstimate {
  std::int64_t queries = 0;
  EstimateSeries series;
};

// Runs one method for `budget` interactions, snapshotting the estimate
// series at every checkpoint.
std::vector<CheckpointEstimate> run_method(const ComparisonSetup& setup, Method method,
                                           std::int64_t budget,
                                           std::span<const std::int64_t> checkpoints,
                                           RandomStream& rng);

ExperimentResult run_experiment(const ExperimentConfig& config);

// The exact dataset and ranker pairs run_experiment derives from a config,
// exposed so tests can inspect the same comparisons.
Dataset experiment_dataset(const ExperimentConfig& config);

struct RankerPair {
  LinearRanker ranker1;
  LinearRanker ranker2;
};

RankerPair experiment_ranker_pair(const ExperimentConfig& config, const Dataset& dataset,
                                  int pair);

struct MethodSummary {
  Method method = Method::kAB;
  std::int64_t queries = 0;
  int cells = 0;
  double mean_binary_error = 0.0;
  double mean_absolute_error = 0.0;
  double mean_mse = 0.0;
};

struct DeltaBinSummary {
  Method method = Method::kAB;
  std::string bin;  // "<0.01", "0.01-0.02", ">=0.02"
  int cells = 0;
  double mean_binary_error = 0.0;
};

struct SummaryTables {
  std::vector<MethodSummary> by_checkpoint;
  std::vector<DeltaBinSummary> by_delta_bin;  // at the final checkpoint
  int error_cells = 0;
};

SummaryTables summarize(const std::vector<ResultRow>& rows);

// CSV round-trip for experiment outputs. Floats print with six significant
// digits; byte-identical across repeated runs of the same config and seed.
void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out);
std::vector<ResultRow> read_results_csv(std::istream& in);
void write_summary_csv(const SummaryTables& tables, std::ostream& out);
void write_timings_csv(const std::vector<CellTiming>& timings, std::ostream& out);

// Metric curves (binary/absolute/mse vs. log-scale query count, one series
// per method) as a self-contained SVG.
void write_curves_svg(const std::vector<ResultRow>& rows, std::ostream& out);

// Interaction logs as line-delimited records:
// qid<TAB>doc,doc,...<TAB>0,1,0,...
void write_interaction_log(const InteractionLog& log, std::ostream& out);
InteractionLog read_interaction_log(std::istream& in);

}  // namespace ranklab
