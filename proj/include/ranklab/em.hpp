#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "ranklab/core.hpp"

namespace ranklab {

struct EMConfig {
  int max_iters = 50;
  double tol = 1e-4;                // stop when the log-likelihood gain drops below this
  std::vector<double> theta_init;   // empty: 1/r
  double zeta_init = 0.5;
};

struct EMResult {
  // theta[r-1] for rank r; NaN where the log has no impression at that
  // rank (reported as absent, not guessed).
  std::vector<double> theta;
  std::vector<std::int64_t> rank_impressions;
  std::unordered_map<std::uint64_t, double> zeta;  // keyed like ClickModel
  double zeta_default = 0.5;                       // for unseen (query, doc) pairs
  std::vector<double> loglik_trace;

  double zeta_at(int query_id, DocId d) const {
    auto it = zeta.find(ClickModel::zeta_key(query_id, d));
    return it == zeta.end() ? zeta_default : it->second;
  }
};

// Tabular position-based-model EM. E-step posteriors per impression:
// clicked means examination and relevance are both certain; unclicked
// splits 1 - theta*zeta mass across (exam, not rel), (not exam, rel),
// (not exam, not rel). M-step averages the posteriors per rank and per
// (query, doc). After convergence theta is rescaled so theta_1 = 1, with
// zeta absorbing the old theta_1, keeping every theta*zeta product intact.
EMResult em_fit(const InteractionLog& log, const EMConfig& config = {});

// Observed-data log-likelihood of the position-based model; clicks on a
// zero-probability cell report -infinity explicitly.
double em_loglik(const InteractionLog& log, std::span<const double> theta,
                 const std::unordered_map<std::uint64_t, double>& zeta, double zeta_default);

// Fitted parameters in the shared checkpoint format: layer 0 is theta
// (1 x k), layer 1 has one (query id, doc id, zeta) row per entry.
void save_em_result(const EMResult& result, std::ostream& out);
EMResult load_em_result(std::istream& in);

}  // namespace ranklab
