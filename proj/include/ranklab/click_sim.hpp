#pragma once

#include <span>
#include <vector>

#include "ranklab/core.hpp"
#include "ranklab/dataset.hpp"

namespace ranklab {

// Position bias theta_r = r^(-bias_exponent) up to the display cutoff;
// conditional click probability zeta = slope * label + intercept, clamped
// to [0, 1].
struct SimulationConfig {
  double bias_exponent = 1.0;
  double zeta_slope = 0.225;
  double zeta_intercept = 0.1;
  int display_length = 5;
};

ClickModel build_click_model(const Dataset& dataset, const SimulationConfig& config);

// Independent Bernoulli click per displayed doc with probability
// theta_rank * zeta. Docs beyond the display cutoff never receive clicks.
std::vector<std::uint8_t> sample_clicks(const Ranking& ranking, const Query& query,
                                        const ClickModel& model, RandomStream& rng);

double click_pattern_prob(std::span<const std::uint8_t> pattern, const Ranking& ranking,
                          const Query& query, const ClickModel& model);

}  // namespace ranklab
