#pragma once

#include <vector>

#include "ranklab/core.hpp"
#include "ranklab/interleaving.hpp"
#include "ranklab/policies.hpp"

namespace ranklab {

// A fully enumerable comparison: one query, few docs, explicit bias and
// relevance, two deterministic rankers. The instrument behind every
// bias/unbiasedness check in the test suites.
struct SmallInstance {
  Query query;                 // docs 0..n-1; features optional
  std::vector<double> theta;   // display length = theta.size()
  std::vector<double> zeta;    // per doc
  Ranking ranking1;
  Ranking ranking2;

  int num_docs() const { return query.num_docs(); }
  ClickModel click_model() const;
  QueryDistribution distribution() const;
  FixedRankingPolicy policy1() const { return FixedRankingPolicy(ranking1.docs); }
  FixedRankingPolicy policy2() const { return FixedRankingPolicy(ranking2.docs); }

  // Exact CTR difference of the two rankers.
  double true_delta() const;

  // The three-doc shape of the closed-form bias analyses: ranker 1 shows
  // [A, B, C], ranker 2 shows [B, C, A], and B is completely non-relevant.
  static SmallInstance three_doc(std::vector<double> theta, double zeta_a, double zeta_c);

  bool is_three_doc_shape() const;
};

enum class EvalMethod { kAB, kTDI, kPI, kOI, kIPS };

// Exact expectation of the method's per-interaction estimate: sums over
// every randomization branch (assignments, coin sequences, interleavings,
// displayed rankings) and every click pattern. kIPS requires the logging
// policy whose propensities the estimator uses.
double enum_expected_outcome(EvalMethod method, const SmallInstance& instance,
                             const Policy* logging_policy = nullptr,
                             const PIConfig& pi_config = {});

// Closed forms printed for the three-doc shape; both must match
// enum_expected_outcome to float precision on their valid inputs.
double tdi_closed_form(const SmallInstance& instance);
double oi_closed_form(const SmallInstance& instance);

struct ParameterGrid {
  std::vector<double> theta2;
  std::vector<double> theta3;  // only combinations with theta2 >= theta3 are used
  std::vector<double> zeta_a;
  std::vector<double> zeta_c;

  static ParameterGrid default_grid();
};

struct SignFlip {
  SmallInstance instance;
  double delta = 0.0;
  double expected_outcome = 0.0;
};

// All grid points (three-doc shape, theta1 = 1) where the method's
// enumerated expected outcome disagrees in sign with the true CTR
// difference. An empty result is a valid outcome.
std::vector<SignFlip> find_sign_flip(EvalMethod method, const ParameterGrid& grid,
                                     const Policy* logging_policy = nullptr,
                                     const PIConfig& pi_config = {});

}  // namespace ranklab
