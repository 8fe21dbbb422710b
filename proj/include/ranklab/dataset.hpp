#pragma once

#include <iosfwd>
#include <vector>

#include "ranklab/core.hpp"

namespace ranklab {

struct Dataset {
  std::vector<Query> queries;
  int feature_dim = 0;
};

// Parses LETOR/SVMLight-style text: one doc per line,
// `<label> qid:<int> <fid>:<float> ... [# comment]`. Docs group by qid in
// file order; labels clamp to 0..4; absent feature ids read as 0.
Dataset parse_letor(std::istream& in);

void write_letor(const Dataset& dataset, std::ostream& out);

// Synthetic dataset: i.i.d. standard normal features, labels from a noisy
// linear ground-truth score bucketed at the 30/55/75/90 percentile cuts.
Dataset generate_synthetic(int num_queries, int docs_per_query, int feature_dim,
                           RandomStream& rng);

struct LinearRanker {
  std::vector<double> weights;            // masked-out features stay 0
  std::vector<std::uint8_t> feature_mask; // which features the ranker may use

  double score(std::span<const double> features) const;
};

struct TrainOptions {
  int pair_updates = 10000;
  double step = 0.01;
};

// Samples training queries and a feature mask, then fits weights by
// pairwise hinge loss over label-discordant doc pairs with stochastic
// subgradient steps.
LinearRanker train_linear_ranker(const Dataset& dataset, int num_train_queries,
                                 double feature_fraction, RandomStream& rng,
                                 const TrainOptions& options = {});

// Weights file: `dim=<int>` then one `<index> <float>` line per nonzero
// weight.
void save_ranker(const LinearRanker& ranker, std::ostream& out);
LinearRanker load_ranker(std::istream& in);

}  // namespace ranklab
