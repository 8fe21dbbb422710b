#pragma once

#include <span>
#include <vector>

#include "ranklab/core.hpp"

namespace ranklab {

// Team-draft interleaving: per round a coin decides which ranker places its
// top unplaced doc first, then the other follows. Clicks are credited to
// the owner of each position.
struct TDIResult {
  Ranking ranking;
  std::vector<int> owners;  // 1 or 2, parallel to ranking.docs
};

TDIResult tdi_interleave(const Ranking& r1, const Ranking& r2, RandomStream& rng,
                         int k = -1);  // k < 0: full length

// Deterministic replay: coins[i] names the first picker (1 or 2) of draft
// round i. Used by the enumeration oracles to sum over all coin sequences.
TDIResult tdi_interleave_with_coins(const Ranking& r1, const Ranking& r2,
                                    std::span<const int> coins, int k = -1);

// Number of draft rounds (= independent coin flips) for a given display
// length.
int tdi_rounds(int display_length);

// Sign of (clicks on owner-1 docs - clicks on owner-2 docs).
int tdi_outcome(const TDIResult& result, std::span<const std::uint8_t> clicks);

// Probabilistic interleaving: each ranker is a softmax over its ranks,
// weight rank^(-tau), renormalized over unplaced docs; at each position a
// ranker is chosen uniformly and a doc drawn from it.
struct PIConfig {
  double tau = 4.0;
};

Ranking pi_interleave(const Ranking& r1, const Ranking& r2, const PIConfig& config,
                      RandomStream& rng, int k = -1);

// Exact probability that PI displays this ranking.
double pi_ranking_prob(const Ranking& displayed, const Ranking& r1, const Ranking& r2,
                       const PIConfig& config);

// Per-position posterior that ranker 1 supplied the doc, given the
// displayed prefix.
std::vector<double> pi_assignment_posteriors(const Ranking& displayed, const Ranking& r1,
                                             const Ranking& r2, const PIConfig& config);

// Expectation of the binary more-clicks outcome over the independent
// per-position assignment posteriors.
double pi_expected_outcome(const Ranking& displayed, std::span<const std::uint8_t> clicks,
                           const Ranking& r1, const Ranking& r2, const PIConfig& config);

// Optimized interleaving: rankings consistent with every pairwise
// preference both rankers agree on, distributed so that equal relevance
// yields zero expected credit. The credit of a doc is its rank in r2 minus
// its rank in r1.
struct OIPlan {
  std::vector<Ranking> allowed;
  std::vector<double> probs;
  std::vector<double> credits;  // indexed by doc id
};

OIPlan oi_plan(const Ranking& r1, const Ranking& r2, std::span<const double> theta,
               int cap = kEnumerationCap);

// Sum of credits over clicked docs.
double oi_outcome(const OIPlan& plan, const Ranking& displayed,
                  std::span<const std::uint8_t> clicks);

}  // namespace ranklab
