#include "ranklab/click_sim.hpp"

#include <algorithm>
#include <cmath>

namespace ranklab {

ClickModel build_click_model(const Dataset& dataset, const SimulationConfig& config) {
  if (config.display_length < 1) throw InvalidInputError("display_length must be >= 1");
  ClickModel model;
  model.theta.resize(config.display_length);
  for (int r = 1; r <= config.display_length; ++r) {
    model.theta[r - 1] = std::pow(static_cast<double>(r), -config.bias_exponent);
  }
  for (const Query& q : dataset.queries) {
    for (DocId d = 0; d < q.num_docs(); ++d) {
      const double raw = config.zeta_slope * q.labels[d] + config.zeta_intercept;
      const double clamped = std::clamp(raw, 0.0, 1.0);
      if (clamped != raw) model.zeta_clamped = true;
      model.set_zeta(q.id, d, clamped);
    }
  }
  return model;
}

std::vector<std::uint8_t> sample_clicks(const Ranking& ranking, const Query& query,
                                        const ClickModel& model, RandomStream& rng) {
  std::vector<std::uint8_t> clicks(ranking.length(), 0);
  for (int i = 0; i < ranking.length(); ++i) {
    const double p = model.theta_at(i + 1) * model.zeta_at(query.id, ranking.docs[i]);
    clicks[i] = rng.bernoulli(p) ? 1 : 0;
  }
  return clicks;
}

double click_pattern_prob(std::span<const std::uint8_t> pattern, const Ranking& ranking,
                          const Query& query, const ClickModel& model) {
  if (static_cast<int>(pattern.size()) != ranking.length()) {
    throw InvalidInputError("click pattern length does not match ranking length");
  }
  double prob = 1.0;
  for (int i = 0; i < ranking.length(); ++i) {
    const double p = model.theta_at(i + 1) * model.zeta_at(query.id, ranking.docs[i]);
    prob *= pattern[i] ? p : 1.0 - p;
  }
  return prob;
}

}  // namespace ranklab
