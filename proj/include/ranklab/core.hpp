#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ranklab/errors.hpp"
#include "ranklab/rng.hpp"

namespace ranklab {

// Documents are identified by their index into the owning query's candidate
// arrays; a (query id, doc) pair identifies a document globally.
using DocId = int;

struct Query {
  int id = 0;
  std::vector<std::vector<double>> features;  // one dense vector per doc
  std::vector<int> labels;                    // relevance grades 0..4

  int num_docs() const { return static_cast<int>(features.size()); }
};

// The displayed prefix of a ranking: an ordered, duplicate-free subset of
// the query's candidate docs.
struct Ranking {
  std::vector<DocId> docs;

  int length() const { return static_cast<int>(docs.size()); }
  int rank_of(DocId d) const;  // 1-based; 0 if not displayed
};

// Position-based click model: examination depends only on rank, clicking an
// examined doc only on its relevance. theta is defined per displayable rank
// and is 0 beyond the display cutoff, which is how item-selection bias
// enters.
struct ClickModel {
  std::vector<double> theta;                      // theta[r-1] for rank r
  std::unordered_map<std::uint64_t, double> zeta; // keyed by (query id, doc)
  bool zeta_clamped = false;

  int display_length() const { return static_cast<int>(theta.size()); }

  double theta_at(int rank) const {
    return (rank >= 1 && rank <= display_length()) ? theta[rank - 1] : 0.0;
  }

  static std::uint64_t zeta_key(int query_id, DocId d) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(query_id)) << 32) |
           static_cast<std::uint32_t>(d);
  }

  void set_zeta(int query_id, DocId d, double value) { zeta[zeta_key(query_id, d)] = value; }

  double zeta_at(int query_id, DocId d) const {
    auto it = zeta.find(zeta_key(query_id, d));
    if (it == zeta.end()) {
      throw InvalidInputError("unknown (query, doc) pair in click model: qid=" +
                              std::to_string(query_id) + " doc=" + std::to_string(d));
    }
    return it->second;
  }
};

struct QueryDistribution {
  std::vector<Query> queries;
  std::vector<double> weights;  // nonnegative, sums to 1 within 1e-12

  void validate() const;
  static QueryDistribution uniform_over(std::vector<Query> queries);
  const Query& sample(RandomStream& rng) const;
};

struct InteractionRecord {
  int query_id = 0;
  Ranking ranking;
  std::vector<std::uint8_t> clicks;  // parallel to ranking.docs

  int total_clicks() const;
};

struct InteractionLog {
  std::vector<InteractionRecord> records;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
};

// A ranking policy expressed as sequential per-rank placement
// probabilities: given the already-placed prefix, the policy gives each
// unplaced doc a probability of taking the next rank. Deterministic rankers
// are point masses. Implementations must be pure; sampling takes an
// explicit stream.
class Policy {
 public:
  virtual ~Policy() = default;

  // Probability that `doc` takes the next rank after `prefix`.
  double placement_prob(const Query& query, std::span<const DocId> prefix, DocId doc) const;

  // Probability of displaying exactly this prefix.
  virtual double ranking_prob(const Query& query, const Ranking& ranking) const;

  // Draws a ranking of length min(k, #docs).
  virtual Ranking sample_ranking(const Query& query, int k, RandomStream& rng) const;

 protected:
  virtual double placement_prob_impl(const Query& query, std::span<const DocId> prefix,
                                     DocId doc) const = 0;
};

// Exact sums over rankings are refused above this candidate count so the
// enumeration oracles stay trustworthy.
inline constexpr int kEnumerationCap = 6;

// Treat propensities below this as exactly zero for support checking.
inline constexpr double kPropensityFloor = 1e-12;

// Calls fn(prob, ranking) for every length-min(k, n) ranking with
// ranking_prob > 0 under the policy. Throws EnumerationCapError when the
// query has more than `cap` docs.
void for_each_ranking(const Policy& policy, const Query& query, int k,
                      const std::function<void(double, const Ranking&)>& fn,
                      int cap = kEnumerationCap);

// Expected number of clicks a displayed ranking receives per impression.
double expected_ctr_ranking(const Ranking& ranking, const Query& query, const ClickModel& model);

struct CtrEstimate {
  double value = 0.0;
  double std_error = 0.0;  // 0 for exact computations
};

// Exact expectation over all rankings the policy can display, weighted by
// query probability. Display length is the model's theta length.
CtrEstimate expected_ctr_policy_exact(const Policy& policy, const QueryDistribution& dist,
                                      const ClickModel& model, int cap = kEnumerationCap);

// Monte-Carlo mean over sampled rankings, with its standard error.
CtrEstimate expected_ctr_policy_mc(const Policy& policy, const QueryDistribution& dist,
                                   const ClickModel& model, int samples, RandomStream& rng);

double delta_exact(const Policy& policy1, const Policy& policy2, const QueryDistribution& dist,
                   const ClickModel& model, int cap = kEnumerationCap);

CtrEstimate delta_mc(const Policy& policy1, const Policy& policy2, const QueryDistribution& dist,
                     const ClickModel& model, int samples, RandomStream& rng);

// Sign of a CTR difference; ties map to 0 rather than an arbitrary side.
int delta_bin(double delta_value);

}  // namespace ranklab
