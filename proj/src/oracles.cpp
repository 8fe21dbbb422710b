#include "ranklab/oracles.hpp"

#include <cmath>

#include "ranklab/click_sim.hpp"
#include "ranklab/estimators.hpp"

namespace ranklab {
namespace {

constexpr double kSignSnap = 1e-12;

int snapped_sign(double x) { return std::abs(x) < kSignSnap ? 0 : delta_bin(x); }

// Sums fn(prob, pattern) over all 2^len click patterns of a displayed
// ranking under the instance's click model.
template <typename Fn>
void for_each_pattern(const SmallInstance& instance, const Ranking& displayed, Fn&& fn) {
  const int len = displayed.length();
  std::vector<std::uint8_t> pattern(len);
  for (std::uint32_t mask = 0; mask < (1u << len); ++mask) {
    double prob = 1.0;
    for (int i = 0; i < len; ++i) {
      pattern[i] = (mask >> i) & 1u;
      const double p = instance.theta[i] * instance.zeta[displayed.docs[i]];
      prob *= pattern[i] ? p : 1.0 - p;
    }
    if (prob > 0.0) fn(prob, pattern);
  }
}

int display_length(const SmallInstance& instance) {
  return std::min<int>(static_cast<int>(instance.theta.size()), instance.num_docs());
}

double enum_ab(const SmallInstance& instance) {
  const int k = display_length(instance);
  double total = 0.0;
  for (int assignment : {1, 2}) {
    Ranking displayed;
    const Ranking& full = assignment == 1 ? instance.ranking1 : instance.ranking2;
    displayed.docs.assign(full.docs.begin(), full.docs.begin() + k);
    InteractionRecord record;
    record.query_id = instance.query.id;
    record.ranking = displayed;
    for_each_pattern(instance, displayed, [&](double prob, const std::vector<std::uint8_t>& c) {
      record.clicks = c;
      total += 0.5 * prob * ab_estimate(record, assignment, 0.5);
    });
  }
  return total;
}

double enum_tdi(const SmallInstance& instance) {
  const int k = display_length(instance);
  const int rounds = tdi_rounds(k);
  const double coin_prob = std::pow(0.5, rounds);
  double total = 0.0;
  std::vector<int> coins(rounds);
  for (std::uint32_t mask = 0; mask < (1u << rounds); ++mask) {
    for (int i = 0; i < rounds; ++i) coins[i] = (mask >> i) & 1u ? 1 : 2;
    const TDIResult result = tdi_interleave_with_coins(instance.ranking1, instance.ranking2,
                                                       coins, k);
    for_each_pattern(instance, result.ranking,
                     [&](double prob, const std::vector<std::uint8_t>& c) {
                       total += coin_prob * prob * tdi_outcome(result, c);
                     });
  }
  return total;
}

double enum_pi(const SmallInstance& instance, const PIConfig& config) {
  const int k = display_length(instance);
  double total = 0.0;
  // Enumerate every displayable prefix; the exact display probability comes
  // from the recursive renormalized mixture.
  std::vector<DocId> current;
  std::vector<bool> used(instance.num_docs(), false);
  auto recurse = [&](auto&& self) -> void {
    if (static_cast<int>(current.size()) == k) {
      Ranking displayed{current};
      const double display_prob =
          pi_ranking_prob(displayed, instance.ranking1, instance.ranking2, config);
      if (display_prob <= 0.0) return;
      for_each_pattern(instance, displayed,
                       [&](double prob, const std::vector<std::uint8_t>& c) {
                         total += display_prob * prob *
                                  pi_expected_outcome(displayed, c, instance.ranking1,
                                                      instance.ranking2, config);
                       });
      return;
    }
    for (DocId d = 0; d < instance.num_docs(); ++d) {
      if (used[d]) continue;
      used[d] = true;
      current.push_back(d);
      self(self);
      current.pop_back();
      used[d] = false;
    }
  };
  recurse(recurse);
  return total;
}

double enum_oi(const SmallInstance& instance) {
  const OIPlan plan = oi_plan(instance.ranking1, instance.ranking2, instance.theta);
  double total = 0.0;
  for (std::size_t i = 0; i < plan.allowed.size(); ++i) {
    for_each_pattern(instance, plan.allowed[i],
                     [&](double prob, const std::vector<std::uint8_t>& c) {
                       total += plan.probs[i] * prob * oi_outcome(plan, plan.allowed[i], c);
                     });
  }
  return total;
}

double enum_ips(const SmallInstance& instance, const Policy& logging_policy) {
  const ClickModel model = instance.click_model();
  const FixedRankingPolicy p1 = instance.policy1();
  const FixedRankingPolicy p2 = instance.policy2();
  const ExposureTable exposure =
      compute_exposure_exact(logging_policy, p1, p2, instance.query, instance.theta);
  double total = 0.0;
  InteractionRecord record;
  record.query_id = instance.query.id;
  for_each_ranking(logging_policy, instance.query, display_length(instance),
                   [&](double display_prob, const Ranking& displayed) {
                     record.ranking = displayed;
                     for_each_pattern(instance, displayed,
                                      [&](double prob, const std::vector<std::uint8_t>& c) {
                                        record.clicks = c;
                                        total += display_prob * prob *
                                                 ips_estimate(record, exposure);
                                      });
                   });
  return total;
}

}  // namespace

ClickModel SmallInstance::click_model() const {
  ClickModel model;
  model.theta = theta;
  for (DocId d = 0; d < num_docs(); ++d) model.set_zeta(query.id, d, zeta[d]);
  return model;
}

QueryDistribution SmallInstance::distribution() const {
  QueryDistribution dist;
  dist.queries = {query};
  dist.weights = {1.0};
  return dist;
}

double SmallInstance::true_delta() const {
  const int k = display_length(*this);
  double d1 = 0.0, d2 = 0.0;
  for (int i = 0; i < k; ++i) {
    d1 += theta[i] * zeta[ranking1.docs[i]];
    d2 += theta[i] * zeta[ranking2.docs[i]];
  }
  return d1 - d2;
}

SmallInstance SmallInstance::three_doc(std::vector<double> theta, double zeta_a,
                                       double zeta_c) {
  SmallInstance instance;
  instance.query.id = 0;
  instance.query.features = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  instance.query.labels = {0, 0, 0};
  instance.theta = std::move(theta);
  instance.zeta = {zeta_a, 0.0, zeta_c};
  instance.ranking1.docs = {0, 1, 2};
  instance.ranking2.docs = {1, 2, 0};
  return instance;
}

bool SmallInstance::is_three_doc_shape() const {
  return num_docs() == 3 && theta.size() == 3 && zeta[1] == 0.0 &&
         ranking1.docs == std::vector<DocId>{0, 1, 2} &&
         ranking2.docs == std::vector<DocId>{1, 2, 0};
}

double enum_expected_outcome(EvalMethod method, const SmallInstance& instance,
                             const Policy* logging_policy, const PIConfig& pi_config) {
  if (instance.num_docs() > 5) {
    throw EnumerationCapError("oracle instances are capped at 5 docs");
  }
  switch (method) {
    case EvalMethod::kAB:
      return enum_ab(instance);
    case EvalMethod::kTDI:
      return enum_tdi(instance);
    case EvalMethod::kPI:
      return enum_pi(instance, pi_config);
    case EvalMethod::kOI:
      return enum_oi(instance);
    case EvalMethod::kIPS:
      if (!logging_policy) throw InvalidInputError("IPS enumeration needs a logging policy");
      return enum_ips(instance, *logging_policy);
  }
  throw InvalidInputError("unknown method");
}

double tdi_closed_form(const SmallInstance& instance) {
  if (!instance.is_three_doc_shape()) {
    throw InvalidInputError("TDI closed form requires the three-doc shape");
  }
  const double t1 = instance.theta[0], t2 = instance.theta[1], t3 = instance.theta[2];
  const double za = instance.zeta[0], zc = instance.zeta[2];
  return 0.25 * (t1 * za + t1 * za * (1.0 - t3 * zc) + t2 * za + t2 * za * (1.0 - t3 * zc));
}

double oi_closed_form(const SmallInstance& instance) {
  if (!instance.is_three_doc_shape()) {
    throw InvalidInputError("OI closed form requires the three-doc shape");
  }
  const double t1 = instance.theta[0], t2 = instance.theta[1], t3 = instance.theta[2];
  const double za = instance.zeta[0], zc = instance.zeta[2];
  return (2.0 * (t1 + t2 + t3) * za - (t2 + 2.0 * t3) * zc) / 3.0;
}

ParameterGrid ParameterGrid::default_grid() {
  ParameterGrid grid;
  for (int i = 1; i <= 20; ++i) {
    grid.theta2.push_back(0.05 * i);
    grid.theta3.push_back(0.05 * i);
  }
  for (int i = 0; i <= 10; ++i) {
    grid.zeta_a.push_back(0.1 * i);
    grid.zeta_c.push_back(0.1 * i);
  }
  return grid;
}

std::vector<SignFlip> find_sign_flip(EvalMethod method, const ParameterGrid& grid,
                                     const Policy* logging_policy,
                                     const PIConfig& pi_config) {
  std::vector<SignFlip> flips;
  for (double t2 : grid.theta2) {
    for (double t3 : grid.theta3) {
      if (t3 > t2) continue;  // keep theta monotone
      for (double za : grid.zeta_a) {
        for (double zc : grid.zeta_c) {
          SmallInstance instance = SmallInstance::three_doc({1.0, t2, t3}, za, zc);
          const double delta = instance.true_delta();
          if (snapped_sign(delta) == 0) continue;
          const double outcome =
              enum_expected_outcome(method, instance, logging_policy, pi_config);
          if (snapped_sign(outcome) != snapped_sign(delta)) {
            flips.push_back({std::move(instance), delta, outcome});
          }
        }
      }
    }
  }
  return flips;
}

}  // namespace ranklab
