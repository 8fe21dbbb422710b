#include "ranklab/interleaving.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ranklab {
namespace {

void check_same_candidates(const Ranking& r1, const Ranking& r2) {
  std::vector<DocId> a = r1.docs, b = r2.docs;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b || std::adjacent_find(a.begin(), a.end()) != a.end()) {
    throw InvalidInputError("interleaving requires the same candidate set");
  }
}

// rank^(-tau) softmax weights aligned to doc position in `ranking`.
std::vector<double> pi_weights(const Ranking& ranking, double tau) {
  std::vector<double> w(ranking.length());
  for (int i = 0; i < ranking.length(); ++i) {
    w[i] = std::pow(static_cast<double>(i + 1), -tau);
  }
  return w;
}

struct PiState {
  const Ranking* r1;
  const Ranking* r2;
  std::vector<double> w1;  // weight of doc d under each ranker
  std::vector<double> w2;
  std::vector<bool> placed;
  double z1, z2;  // weight mass still unplaced

  PiState(const Ranking& a, const Ranking& b, double tau) : r1(&a), r2(&b) {
    check_same_candidates(a, b);
    const int n = a.length();
    const std::vector<double> by_rank = pi_weights(a, tau);
    DocId max_doc = 0;
    for (DocId d : a.docs) max_doc = std::max(max_doc, d);
    w1.assign(max_doc + 1, 0.0);
    w2.assign(max_doc + 1, 0.0);
    placed.assign(max_doc + 1, false);
    for (int i = 0; i < n; ++i) {
      w1[a.docs[i]] = by_rank[i];
      w2[b.docs[i]] = by_rank[i];
    }
    z1 = z2 = 0.0;
    for (DocId d : a.docs) {
      z1 += w1[d];
      z2 += w2[d];
    }
  }

  double p1(DocId d) const { return w1[d] / z1; }
  double p2(DocId d) const { return w2[d] / z2; }

  void place(DocId d) {
    if (d < 0 || d >= static_cast<DocId>(placed.size()) || placed[d] ||
        (w1[d] == 0.0 && w2[d] == 0.0)) {
      throw InvalidInputError("displayed ranking is not reachable from the candidate set");
    }
    placed[d] = true;
    z1 -= w1[d];
    z2 -= w2[d];
  }
};

}  // namespace

int tdi_rounds(int display_length) { return (display_length + 1) / 2; }

TDIResult tdi_interleave_with_coins(const Ranking& r1, const Ranking& r2,
                                    std::span<const int> coins, int k) {
  check_same_candidates(r1, r2);
  const int n = r1.length();
  const int len = k < 0 ? n : std::min(k, n);
  if (static_cast<int>(coins.size()) < tdi_rounds(len)) {
    throw InvalidInputError("not enough coins for the draft rounds");
  }
  TDIResult out;
  std::vector<bool> placed_doc(n > 0 ? *std::max_element(r1.docs.begin(), r1.docs.end()) + 1 : 0,
                               false);
  auto take_top = [&](const Ranking& r, int owner) {
    for (DocId d : r.docs) {
      if (!placed_doc[d]) {
        placed_doc[d] = true;
        out.ranking.docs.push_back(d);
        out.owners.push_back(owner);
        return;
      }
    }
  };
  for (int round = 0; out.ranking.length() < len; ++round) {
    const bool first_is_1 = coins[round] == 1;
    take_top(first_is_1 ? r1 : r2, first_is_1 ? 1 : 2);
    if (out.ranking.length() < len) take_top(first_is_1 ? r2 : r1, first_is_1 ? 2 : 1);
  }
  return out;
}

TDIResult tdi_interleave(const Ranking& r1, const Ranking& r2, RandomStream& rng, int k) {
  check_same_candidates(r1, r2);
  const int len = k < 0 ? r1.length() : std::min(k, r1.length());
  std::vector<int> coins(tdi_rounds(len));
  for (int& c : coins) c = rng.bernoulli(0.5) ? 1 : 2;
  return tdi_interleave_with_coins(r1, r2, coins, k);
}

int tdi_outcome(const TDIResult& result, std::span<const std::uint8_t> clicks) {
  if (clicks.size() != result.owners.size()) {
    throw InvalidInputError("click pattern length does not match interleaved ranking");
  }
  int diff = 0;
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    if (clicks[i]) diff += result.owners[i] == 1 ? 1 : -1;
  }
  return delta_bin(diff);
}

Ranking pi_interleave(const Ranking& r1, const Ranking& r2, const PIConfig& config,
                      RandomStream& rng, int k) {
  PiState state(r1, r2, config.tau);
  const int n = r1.length();
  const int len = k < 0 ? n : std::min(k, n);
  Ranking out;
  std::vector<double> probs;
  std::vector<DocId> remaining;
  for (int step = 0; step < len; ++step) {
    const bool use_1 = rng.bernoulli(0.5);
    probs.clear();
    remaining.clear();
    for (DocId d : r1.docs) {
      if (!state.placed[d]) {
        remaining.push_back(d);
        probs.push_back(use_1 ? state.p1(d) : state.p2(d));
      }
    }
    const DocId pick = remaining[sample_categorical(probs, rng)];
    out.docs.push_back(pick);
    state.place(pick);
  }
  return out;
}

double pi_ranking_prob(const Ranking& displayed, const Ranking& r1, const Ranking& r2,
                       const PIConfig& config) {
  PiState state(r1, r2, config.tau);
  double prob = 1.0;
  for (DocId d : displayed.docs) {
    const double p = 0.5 * state.p1(d) + 0.5 * state.p2(d);
    prob *= p;
    state.place(d);
  }
  return prob;
}

std::vector<double> pi_assignment_posteriors(const Ranking& displayed, const Ranking& r1,
                                             const Ranking& r2, const PIConfig& config) {
  PiState state(r1, r2, config.tau);
  std::vector<double> posteriors(displayed.length());
  for (int i = 0; i < displayed.length(); ++i) {
    const DocId d = displayed.docs[i];
    const double a = state.p1(d);
    const double b = state.p2(d);
    posteriors[i] = a / (a + b);
    state.place(d);
  }
  return posteriors;
}

double pi_expected_outcome(const Ranking& displayed, std::span<const std::uint8_t> clicks,
                           const Ranking& r1, const Ranking& r2, const PIConfig& config) {
  if (static_cast<int>(clicks.size()) != displayed.length()) {
    throw InvalidInputError("click pattern length does not match displayed ranking");
  }
  const std::vector<double> posteriors = pi_assignment_posteriors(displayed, r1, r2, config);
  std::vector<double> q;  // posterior of ranker 1 per clicked position
  for (std::size_t i = 0; i < clicks.size(); ++i) {
    if (clicks[i]) q.push_back(posteriors[i]);
  }
  if (q.empty()) return 0.0;

  const int m = static_cast<int>(q.size());
  double expectation = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    double prob = 1.0;
    int n1 = 0;
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) {
        prob *= q[i];
        ++n1;
      } else {
        prob *= 1.0 - q[i];
      }
    }
    expectation += prob * delta_bin(2 * n1 - m);
  }
  return expectation;
}

namespace {

// Maximum-entropy distribution over values v with sum_i p_i v_i = 0:
// p_i proportional to exp(-mu v_i) with mu solving the constraint. The
// constraint function is strictly decreasing in mu, so bisection suffices.
std::vector<double> max_entropy_zero_mean(const std::vector<double>& v) {
  const std::size_t n = v.size();
  const double vmax = *std::max_element(v.begin(), v.end());
  const double vmin = *std::min_element(v.begin(), v.end());
  const double tol = 1e-13;

  if (vmax <= tol && vmin >= -tol) return std::vector<double>(n, 1.0 / n);
  if (vmin >= -tol || vmax <= tol) {
    // All constraint values on one side: only rankings with value 0 can
    // carry mass. No zeros means the system is infeasible.
    std::vector<double> p(n, 0.0);
    int zeros = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(v[i]) <= tol) {
        p[i] = 1.0;
        ++zeros;
      }
    }
    if (zeros == 0) {
      throw InfeasiblePlanError("zero-credit constraint is infeasible for this ranker pair");
    }
    for (double& x : p) x /= zeros;
    return p;
  }

  auto weights_at = [&](double mu) {
    std::vector<double> w(n);
    double max_exp = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) max_exp = std::max(max_exp, -mu * v[i]);
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(-mu * v[i] - max_exp);
    return w;
  };
  auto constraint = [&](double mu) {
    const std::vector<double> w = weights_at(mu);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += w[i] * v[i];
      den += w[i];
    }
    return num / den;
  };

  double lo = -1.0, hi = 1.0;
  while (constraint(lo) <= 0.0) lo *= 2.0;
  while (constraint(hi) >= 0.0) hi *= 2.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (constraint(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  std::vector<double> p = weights_at(0.5 * (lo + hi));
  double total = 0.0;
  for (double x : p) total += x;
  for (double& x : p) x /= total;
  return p;
}

}  // namespace

OIPlan oi_plan(const Ranking& r1, const Ranking& r2, std::span<const double> theta, int cap) {
  check_same_candidates(r1, r2);
  const int n = r1.length();
  if (n > cap) {
    throw EnumerationCapError("OI allowed-set enumeration refused for " + std::to_string(n) +
                              " docs");
  }
  std::vector<DocId> docs = r1.docs;
  std::sort(docs.begin(), docs.end());
  if (docs.front() != 0 || docs.back() != n - 1) {
    throw InvalidInputError("OI expects docs 0..n-1");
  }

  OIPlan plan;
  plan.credits.resize(n);
  for (DocId d = 0; d < n; ++d) {
    plan.credits[d] = static_cast<double>(r2.rank_of(d) - r1.rank_of(d));
  }

  // Pairwise preferences both rankers agree on.
  std::vector<std::pair<DocId, DocId>> agreed;  // (above, below)
  for (DocId a = 0; a < n; ++a) {
    for (DocId b = 0; b < n; ++b) {
      if (a != b && r1.rank_of(a) < r1.rank_of(b) && r2.rank_of(a) < r2.rank_of(b)) {
        agreed.emplace_back(a, b);
      }
    }
  }

  const int len = std::min<int>(static_cast<int>(theta.size()), n);
  std::vector<DocId> current;
  std::vector<bool> used(n, false);
  auto consistent = [&](DocId candidate) {
    // Placing `candidate` next must not put it above a doc that both
    // rankers prefer, whether that doc is already displayed or not.
    for (const auto& [above, below] : agreed) {
      if (below == candidate && !used[above]) return false;
    }
    return true;
  };
  auto recurse = [&](auto&& self) -> void {
    if (static_cast<int>(current.size()) == len) {
      plan.allowed.push_back(Ranking{current});
      return;
    }
    for (DocId d = 0; d < n; ++d) {
      if (used[d] || !consistent(d)) continue;
      used[d] = true;
      current.push_back(d);
      self(self);
      current.pop_back();
      used[d] = false;
    }
  };
  recurse(recurse);

  std::vector<double> v(plan.allowed.size(), 0.0);
  for (std::size_t i = 0; i < plan.allowed.size(); ++i) {
    const Ranking& r = plan.allowed[i];
    for (int pos = 0; pos < r.length(); ++pos) {
      v[i] += theta[pos] * plan.credits[r.docs[pos]];
    }
  }
  plan.probs = max_entropy_zero_mean(v);
  return plan;
}

double oi_outcome(const OIPlan& plan, const Ranking& displayed,
                  std::span<const std::uint8_t> clicks) {
  if (static_cast<int>(clicks.size()) != displayed.length()) {
    throw InvalidInputError("click pattern length does not match displayed ranking");
  }
  const bool known = std::any_of(plan.allowed.begin(), plan.allowed.end(),
                                 [&](const Ranking& r) { return r.docs == displayed.docs; });
  if (!known) throw InvalidInputError("displayed ranking is not in the allowed set");
  double credit = 0.0;
  for (int i = 0; i < displayed.length(); ++i) {
    if (clicks[i]) credit += plan.credits[displayed.docs[i]];
  }
  return credit;
}

}  // namespace ranklab
