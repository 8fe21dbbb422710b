#include "ranklab/core.hpp"

#include <algorithm>
#include <cmath>

namespace ranklab {
namespace {

void check_ranking(const Query& query, const Ranking& ranking) {
  std::vector<bool> seen(query.num_docs(), false);
  for (DocId d : ranking.docs) {
    if (d < 0 || d >= query.num_docs()) {
      throw InvalidInputError("ranking references unknown doc id " + std::to_string(d));
    }
    if (seen[d]) throw InvalidInputError("ranking repeats doc id " + std::to_string(d));
    seen[d] = true;
  }
}

}  // namespace

int Ranking::rank_of(DocId d) const {
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i] == d) return static_cast<int>(i) + 1;
  }
  return 0;
}

void QueryDistribution::validate() const {
  if (queries.empty()) throw InvalidInputError("query distribution is empty");
  if (queries.size() != weights.size()) {
    throw InvalidInputError("query distribution has mismatched weights");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw InvalidInputError("negative query weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InvalidInputError("query weights sum to " + std::to_string(total));
  }
}

QueryDistribution QueryDistribution::uniform_over(std::vector<Query> queries) {
  QueryDistribution dist;
  dist.weights.assign(queries.size(), 1.0 / static_cast<double>(queries.size()));
  dist.queries = std::move(queries);
  return dist;
}

const Query& QueryDistribution::sample(RandomStream& rng) const {
  return queries[sample_categorical(weights, rng)];
}

int InteractionRecord::total_clicks() const {
  int n = 0;
  for (std::uint8_t c : clicks) n += c != 0;
  return n;
}

double Policy::placement_prob(const Query& query, std::span<const DocId> prefix,
                              DocId doc) const {
  if (doc < 0 || doc >= query.num_docs()) {
    throw InvalidInputError("placement_prob: unknown doc id " + std::to_string(doc));
  }
  for (DocId p : prefix) {
    if (p == doc) {
      throw InvalidInputError("placement_prob: doc " + std::to_string(doc) +
                              " already placed");
    }
  }
  return placement_prob_impl(query, prefix, doc);
}

double Policy::ranking_prob(const Query& query, const Ranking& ranking) const {
  check_ranking(query, ranking);
  double prob = 1.0;
  for (int i = 0; i < ranking.length(); ++i) {
    std::span<const DocId> prefix(ranking.docs.data(), static_cast<std::size_t>(i));
    prob *= placement_prob(query, prefix, ranking.docs[i]);
    if (prob == 0.0) break;
  }
  return prob;
}

Ranking Policy::sample_ranking(const Query& query, int k, RandomStream& rng) const {
  if (k < 1) throw InvalidInputError("sample_ranking: k must be >= 1");
  const int len = std::min(k, query.num_docs());
  Ranking out;
  out.docs.reserve(len);
  std::vector<DocId> remaining(query.num_docs());
  for (int d = 0; d < query.num_docs(); ++d) remaining[d] = d;
  std::vector<double> probs;
  for (int step = 0; step < len; ++step) {
    probs.clear();
    std::span<const DocId> prefix(out.docs.data(), out.docs.size());
    for (DocId d : remaining) probs.push_back(placement_prob(query, prefix, d));
    const int pick = sample_categorical(probs, rng);
    out.docs.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + pick);
  }
  return out;
}

void for_each_ranking(const Policy& policy, const Query& query, int k,
                      const std::function<void(double, const Ranking&)>& fn, int cap) {
  if (query.num_docs() > cap) {
    throw EnumerationCapError("exact enumeration refused for " +
                              std::to_string(query.num_docs()) + " docs (cap " +
                              std::to_string(cap) + ")");
  }
  const int len = std::min(k, query.num_docs());
  Ranking current;
  current.docs.reserve(len);
  std::vector<bool> used(query.num_docs(), false);
  auto recurse = [&](auto&& self, double prob) -> void {
    if (current.length() == len) {
      fn(prob, current);
      return;
    }
    for (DocId d = 0; d < query.num_docs(); ++d) {
      if (used[d]) continue;
      const std::span<const DocId> prefix(current.docs.data(), current.docs.size());
      const double p = policy.placement_prob(query, prefix, d);
      if (p <= 0.0) continue;
      used[d] = true;
      current.docs.push_back(d);
      self(self, prob * p);
      current.docs.pop_back();
      used[d] = false;
    }
  };
  recurse(recurse, 1.0);
}

double expected_ctr_ranking(const Ranking& ranking, const Query& query,
                            const ClickModel& model) {
  check_ranking(query, ranking);
  double total = 0.0;
  for (int i = 0; i < ranking.length(); ++i) {
    total += model.theta_at(i + 1) * model.zeta_at(query.id, ranking.docs[i]);
  }
  return total;
}

CtrEstimate expected_ctr_policy_exact(const Policy& policy, const QueryDistribution& dist,
                                      const ClickModel& model, int cap) {
  dist.validate();
  double total = 0.0;
  for (std::size_t qi = 0; qi < dist.queries.size(); ++qi) {
    const Query& query = dist.queries[qi];
    double per_query = 0.0;
    for_each_ranking(
        policy, query, model.display_length(),
        [&](double prob, const Ranking& r) { per_query += prob * expected_ctr_ranking(r, query, model); },
        cap);
    total += dist.weights[qi] * per_query;
  }
  return {total, 0.0};
}

CtrEstimate expected_ctr_policy_mc(const Policy& policy, const QueryDistribution& dist,
                                   const ClickModel& model, int samples, RandomStream& rng) {
  dist.validate();
  if (samples < 1) throw InvalidInputError("sample budget must be >= 1");
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Query& query = dist.sample(rng);
    const Ranking r = policy.sample_ranking(query, model.display_length(), rng);
    const double x = expected_ctr_ranking(r, query, model);
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / samples;
  const double var = std::max(0.0, sum_sq / samples - mean * mean);
  return {mean, std::sqrt(var / samples)};
}

double delta_exact(const Policy& policy1, const Policy& policy2, const QueryDistribution& dist,
                   const ClickModel& model, int cap) {
  return expected_ctr_policy_exact(policy1, dist, model, cap).value -
         expected_ctr_policy_exact(policy2, dist, model, cap).value;
}

CtrEstimate delta_mc(const Policy& policy1, const Policy& policy2, const QueryDistribution& dist,
                     const ClickModel& model, int samples, RandomStream& rng) {
  const CtrEstimate a = expected_ctr_policy_mc(policy1, dist, model, samples, rng);
  const CtrEstimate b = expected_ctr_policy_mc(policy2, dist, model, samples, rng);
  return {a.value - b.value, std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error)};
}

int delta_bin(double delta_value) {
  if (delta_value > 0.0) return 1;
  if (delta_value < 0.0) return -1;
  return 0;
}

}  // namespace ranklab
