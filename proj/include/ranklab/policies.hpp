#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "ranklab/core.hpp"

namespace ranklab {

// A policy that always displays one ranking per query. Placement puts the
// highest-ordered unplaced doc next with probability 1.
class DeterministicPolicy : public Policy {
 public:
  virtual std::vector<DocId> ordering(const Query& query) const = 0;

  Ranking top_k(const Query& query, int k) const;
  Ranking sample_ranking(const Query& query, int k, RandomStream& rng) const override;

 protected:
  double placement_prob_impl(const Query& query, std::span<const DocId> prefix,
                             DocId doc) const override;
};

// Fixture policy: a fixed doc order for queries of a known shape.
class FixedRankingPolicy : public DeterministicPolicy {
 public:
  explicit FixedRankingPolicy(std::vector<DocId> order) : order_(std::move(order)) {}
  std::vector<DocId> ordering(const Query& query) const override;

 private:
  std::vector<DocId> order_;
};

// Ranks by descending linear score over doc features; ties break by
// ascending doc id for reproducibility.
class LinearRankerPolicy : public DeterministicPolicy {
 public:
  explicit LinearRankerPolicy(std::vector<double> weights) : weights_(std::move(weights)) {}
  std::vector<DocId> ordering(const Query& query) const override;
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
};

class UniformRankingPolicy : public Policy {
 protected:
  double placement_prob_impl(const Query& query, std::span<const DocId> prefix,
                             DocId doc) const override;
};

// Plackett-Luce policy over the scores of a small feed-forward network
// (two tanh hidden layers, scalar output per doc). The placement
// distribution at every rank is a softmax over the scores of the unplaced
// docs, so scores are query-independent and can be computed once per doc.
class ScoreNetworkPolicy : public Policy {
 public:
  ScoreNetworkPolicy(int input_dim, int hidden, std::uint64_t init_seed);

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  int parameter_count() const { return static_cast<int>(params_.size()); }
  std::span<const double> parameters() const { return params_; }
  void set_parameters(std::span<const double> params);
  void apply_gradient_step(std::span<const double> grad, double learning_rate);

  double score(std::span<const double> features) const;
  std::vector<double> doc_scores(const Query& query) const;

  // Writes dscore/dparams for one doc into `grad` (overwriting) and returns
  // the score. `grad` must have parameter_count() entries.
  double score_with_grad(std::span<const double> features, std::span<double> grad) const;

 protected:
  double placement_prob_impl(const Query& query, std::span<const DocId> prefix,
                             DocId doc) const override;

 private:
  int input_dim_;
  int hidden_;
  std::vector<double> params_;

  // Parameter layout offsets.
  int w1_, b1_, w2_, b2_, w3_, b3_;
};

// Per-step epsilon mixture with the uniform policy. Guarantees every
// unplaced doc a placement probability of at least epsilon / #unplaced,
// which keeps every doc's propensity positive and the IPS support
// requirement satisfied.
class MixturePolicy : public Policy {
 public:
  MixturePolicy(std::shared_ptr<const Policy> base, double epsilon);

  double epsilon() const { return epsilon_; }
  const Policy& base() const { return *base_; }

 protected:
  double placement_prob_impl(const Query& query, std::span<const DocId> prefix,
                             DocId doc) const override;

 private:
  std::shared_ptr<const Policy> base_;
  double epsilon_;
};

// Mixture at the whole-ranking level: draw one component, display its
// ranking. Placement probabilities condition on the prefix via the
// component posterior. This is the A/B logging policy when given two
// deterministic rankers with equal weights.
class RankingMixturePolicy : public Policy {
 public:
  RankingMixturePolicy(std::vector<std::shared_ptr<const Policy>> components,
                       std::vector<double> weights);

  Ranking sample_ranking(const Query& query, int k, RandomStream& rng) const override;

 protected:
  double placement_prob_impl(const Query& query, std::span<const DocId> prefix,
                             DocId doc) const override;

 private:
  std::vector<std::shared_ptr<const Policy>> components_;
  std::vector<double> weights_;
};

// Gradient of log placement_prob with respect to all network parameters,
// via the softmax Jacobian and backpropagation through the score network.
std::vector<double> placement_logprob_grad(const ScoreNetworkPolicy& policy, const Query& query,
                                           std::span<const DocId> prefix, DocId doc);

// Softmax over the scores of `remaining`, writing probabilities parallel to
// `remaining`. Stable under large score differences.
void plackett_luce_probs(std::span<const double> scores, std::span<const DocId> remaining,
                         std::vector<double>& probs_out);

// Versioned flat text checkpoints: `layer <i> <rows> <cols>` headers
// followed by row-major floats. Shared by policy and click-model
// serialization.
struct MatrixBlock {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major, rows*cols entries
};

void write_blocks(std::ostream& out, std::span<const MatrixBlock> blocks);
std::vector<MatrixBlock> read_blocks(std::istream& in);

void save_network(const ScoreNetworkPolicy& policy, std::ostream& out);
ScoreNetworkPolicy load_network(std::istream& in);

}  // namespace ranklab
