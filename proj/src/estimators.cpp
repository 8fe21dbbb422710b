#include "ranklab/estimators.hpp"

#include <cmath>

namespace ranklab {

std::vector<double> exposure_under_exact(const Policy& policy, const Query& query,
                                         std::span<const double> theta, int cap) {
  std::vector<double> rho(query.num_docs(), 0.0);
  const int k = static_cast<int>(theta.size());
  for_each_ranking(
      policy, query, k,
      [&](double prob, const Ranking& r) {
        for (int i = 0; i < r.length(); ++i) rho[r.docs[i]] += prob * theta[i];
      },
      cap);
  return rho;
}

McExposure exposure_under_mc(const Policy& policy, const Query& query,
                             std::span<const double> theta, int samples, RandomStream& rng) {
  if (samples < 1) throw InvalidInputError("MC exposure needs a sample count >= 1");
  const int k = static_cast<int>(theta.size());
  std::vector<double> sum(query.num_docs(), 0.0), sum_sq(query.num_docs(), 0.0);
  for (int s = 0; s < samples; ++s) {
    const Ranking r = policy.sample_ranking(query, k, rng);
    for (int i = 0; i < r.length(); ++i) {
      sum[r.docs[i]] += theta[i];
      sum_sq[r.docs[i]] += theta[i] * theta[i];
    }
  }
  McExposure out;
  out.rho.resize(query.num_docs());
  out.std_error.resize(query.num_docs());
  for (DocId d = 0; d < query.num_docs(); ++d) {
    const double mean = sum[d] / samples;
    const double var = std::max(0.0, sum_sq[d] / samples - mean * mean);
    out.rho[d] = mean;
    out.std_error[d] = std::sqrt(var / samples);
  }
  return out;
}

namespace {

ExposureTable assemble(std::vector<double> rho, std::vector<double> rho_se,
                       const std::vector<double>& exp1, const std::vector<double>& exp2,
                       int mc_samples) {
  ExposureTable table;
  table.mc_samples = mc_samples;
  table.docs.resize(rho.size());
  for (std::size_t d = 0; d < rho.size(); ++d) {
    table.docs[d].rho = rho[d];
    table.docs[d].rho_std_error = rho_se.empty() ? 0.0 : rho_se[d];
    table.docs[d].lambda = exp1[d] - exp2[d];
  }
  return table;
}

}  // namespace

ExposureTable compute_exposure_exact(const Policy& logging_policy, const Policy& policy1,
                                     const Policy& policy2, const Query& query,
                                     std::span<const double> theta, int cap) {
  return assemble(exposure_under_exact(logging_policy, query, theta, cap), {},
                  exposure_under_exact(policy1, query, theta, cap),
                  exposure_under_exact(policy2, query, theta, cap), 0);
}

ExposureTable compute_exposure_mc(const Policy& logging_policy, const Policy& policy1,
                                  const Policy& policy2, const Query& query,
                                  std::span<const double> theta, int samples,
                                  RandomStream& rng) {
  McExposure log_exp = exposure_under_mc(logging_policy, query, theta, samples, rng);
  McExposure e1 = exposure_under_mc(policy1, query, theta, samples, rng);
  McExposure e2 = exposure_under_mc(policy2, query, theta, samples, rng);
  return assemble(std::move(log_exp.rho), std::move(log_exp.std_error), e1.rho, e2.rho,
                  samples);
}

double ab_estimate(const InteractionRecord& record, int assignment, double prob_1) {
  if (prob_1 <= 0.0 || prob_1 >= 1.0) throw InvalidInputError("prob_1 must be in (0, 1)");
  if (assignment != 1 && assignment != 2) throw InvalidInputError("assignment must be 1 or 2");
  const double weight = assignment == 1 ? 1.0 / prob_1 : -1.0 / (1.0 - prob_1);
  return weight * record.total_clicks();
}

double ips_estimate(const InteractionRecord& record, const ExposureTable& exposure) {
  double x = 0.0;
  for (int i = 0; i < record.ranking.length(); ++i) {
    if (!record.clicks[i]) continue;
    const ExposureEntry& e = exposure.at(record.ranking.docs[i]);
    if (e.rho <= kPropensityFloor) {
      throw SupportViolationError("click on doc " + std::to_string(record.ranking.docs[i]) +
                                  " with zero logging propensity (qid " +
                                  std::to_string(record.query_id) + ")");
    }
    x += e.lambda / e.rho;
  }
  return x;
}

SupportReport check_support(const Policy& logging_policy, const Policy& policy1,
                            const Policy& policy2, const QueryDistribution& dist,
                            const ClickModel& model, int cap) {
  dist.validate();
  SupportReport report;
  for (const Query& query : dist.queries) {
    const ExposureTable table =
        compute_exposure_exact(logging_policy, policy1, policy2, query, model.theta, cap);
    for (DocId d = 0; d < query.num_docs(); ++d) {
      const ExposureEntry& e = table.at(d);
      const double zeta = model.zeta_at(query.id, d);
      if (zeta * e.lambda > 0.0 && e.rho <= kPropensityFloor) {
        report.violations.push_back({query.id, d, zeta, e.lambda, e.rho});
      }
    }
  }
  return report;
}

Metrics metrics(const EstimateSeries& series, double true_delta) {
  if (series.count() < 1) throw InvalidInputError("metrics need at least one estimate");
  Metrics m;
  m.binary_error = delta_bin(series.mean()) != delta_bin(true_delta) ? 1 : 0;
  m.absolute_error = std::abs(true_delta - series.mean());
  m.mse = series.mse_against(true_delta);
  return m;
}

}  // namespace ranklab
