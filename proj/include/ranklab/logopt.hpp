#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ranklab/core.hpp"
#include "ranklab/dataset.hpp"
#include "ranklab/em.hpp"
#include "ranklab/estimators.hpp"
#include "ranklab/policies.hpp"

namespace ranklab {

// Everything the variance objective needs for one query: the current CTR
// difference estimate, the exposure table (lambda under the estimated bias,
// rho under the current logging policy), the estimated click model, and the
// per-step sample count.
struct VarianceContext {
  double delta_hat = 0.0;
  ExposureTable exposure;
  std::vector<double> theta_hat;
  std::vector<double> zeta_hat;  // dense, by doc id of the query
  int gradient_samples = 32;     // M
};

// Exact IPS-estimator variance for one query: the squared error of every
// click pattern, weighted by its probability under the logging policy.
// rho is recomputed exactly under `logging_policy`; lambda and delta come
// from the context.
double exact_variance(const Policy& logging_policy, const VarianceContext& ctx,
                      const Query& query, int cap = 5);

struct GradientEstimate {
  std::vector<double> grad;          // d variance / d network parameters
  double mean_squared_error = 0.0;   // MC estimate of the variance itself
};

// REINFORCE-style Monte-Carlo estimate of the variance gradient for the
// epsilon-mixture of `network` with the uniform policy (epsilon fixed,
// only network parameters receive gradient). Samples M rankings from the
// mixture and a click pattern for each, then combines the pattern-frequency
// term with the propensity chain-rule term.
GradientEstimate approx_variance_gradient(const ScoreNetworkPolicy& network,
                                          double mixture_epsilon, const VarianceContext& ctx,
                                          const Query& query, RandomStream& rng);

struct OptimizerConfig {
  int steps = 2000;
  double learning_rate = 1e-2;
  double epsilon = 0.1;  // mixture floor of the returned logging policy
  std::vector<std::int64_t> update_schedule = {1000, 10000, 100000, 1000000};
  int gradient_samples = 32;       // M rankings per step
  int rho_refresh_interval = 100;  // steps between propensity refreshes
  int rho_refresh_samples = 1000;  // MC samples per refresh
  int network_hidden = 32;
};

struct TraceRow {
  int step = 0;
  double estimated_variance = 0.0;
  double gradient_norm = 0.0;
};

struct LogOptResult {
  std::shared_ptr<ScoreNetworkPolicy> network;
  std::shared_ptr<MixturePolicy> policy;  // the trained epsilon-mixture
  std::vector<TraceRow> trace;
};

// Trains a logging policy against the weighted per-query variance
// objective. The contexts' rho entries are refreshed against the current
// mixture every rho_refresh_interval steps by Monte-Carlo exposure.
LogOptResult train_logging_policy(std::span<const Query> queries,
                                  std::span<const double> query_weights,
                                  std::vector<VarianceContext> contexts,
                                  const OptimizerConfig& config, RandomStream& rng);

// The full pipeline on a historical log: fit the click model by EM, build
// lambda and the IPS CTR-difference estimate from the log under the fitted
// bias, then train a fresh score network. Propensities for the historical
// interactions are the empirical means of the fitted examination
// probabilities at each doc's displayed ranks.
struct LogOptOutput {
  LogOptResult training;
  EMResult em;
  double delta_hat = 0.0;
};

LogOptOutput optimize_logging_policy(const InteractionLog& log, const Dataset& dataset,
                                     const Policy& policy1, const Policy& policy2,
                                     const OptimizerConfig& config, RandomStream& rng);

// Oracle variant: true bias, relevance, and CTR difference injected instead
// of estimates.
LogOptResult optimize_logging_policy_oracle(const QueryDistribution& dist,
                                            const Policy& policy1, const Policy& policy2,
                                            const ClickModel& model, double true_delta,
                                            const OptimizerConfig& config, RandomStream& rng);

}  // namespace ranklab
