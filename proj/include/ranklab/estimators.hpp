#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ranklab/core.hpp"

namespace ranklab {

struct ABAssignment {
  int assignment = 1;   // 1 or 2
  double prob_1 = 0.5;  // P(A = 1), in (0, 1)
};

struct ExposureEntry {
  double rho = 0.0;            // logging propensity E[theta_rank(d|R)] under pi_0
  double lambda = 0.0;         // exposure difference between pi_1 and pi_2
  double rho_std_error = 0.0;  // 0 for exact computations
};

// Per-query table indexed by doc id.
struct ExposureTable {
  std::vector<ExposureEntry> docs;
  int mc_samples = 0;  // 0 when exact

  const ExposureEntry& at(DocId d) const { return docs.at(static_cast<std::size_t>(d)); }
};

// rho(d) = sum_R pi(R|q) theta_rank(d|R); exact by enumeration.
std::vector<double> exposure_under_exact(const Policy& policy, const Query& query,
                                         std::span<const double> theta,
                                         int cap = kEnumerationCap);

// Monte-Carlo counterpart, also returning per-doc standard errors.
struct McExposure {
  std::vector<double> rho;
  std::vector<double> std_error;
};
McExposure exposure_under_mc(const Policy& policy, const Query& query,
                             std::span<const double> theta, int samples, RandomStream& rng);

ExposureTable compute_exposure_exact(const Policy& logging_policy, const Policy& policy1,
                                     const Policy& policy2, const Query& query,
                                     std::span<const double> theta, int cap = kEnumerationCap);

ExposureTable compute_exposure_mc(const Policy& logging_policy, const Policy& policy1,
                                  const Policy& policy2, const Query& query,
                                  std::span<const double> theta, int samples,
                                  RandomStream& rng);

// f_A/B: signed inverse-probability weight times the total click count.
double ab_estimate(const InteractionRecord& record, int assignment, double prob_1);

// f_IPS: sum over clicked docs of lambda / rho. A click on a doc whose
// propensity is (numerically) zero breaches the support requirement and is
// reported as an error rather than skipped.
double ips_estimate(const InteractionRecord& record, const ExposureTable& exposure);

struct SupportViolation {
  int query_id = 0;
  DocId doc = 0;
  double zeta = 0.0;
  double lambda = 0.0;
  double rho = 0.0;
};

struct SupportReport {
  std::vector<SupportViolation> violations;
  bool ok() const { return violations.empty(); }
};

// Lists every (query, doc) with zeta * lambda > 0 but rho = 0; an empty
// report is equivalent to the support requirement holding.
SupportReport check_support(const Policy& logging_policy, const Policy& policy1,
                            const Policy& policy2, const QueryDistribution& dist,
                            const ClickModel& model, int cap = kEnumerationCap);

// Streaming per-interaction estimates with exact merge of independently
// accumulated parts.
class EstimateSeries {
 public:
  void add(double x) {
    ++n_;
    sum_ += x;
    sum_sq_ += x * x;
  }

  void merge(const EstimateSeries& other) {
    n_ += other.n_;
    sum_ += other.sum_;
    sum_sq_ += other.sum_sq_;
  }

  std::int64_t count() const { return n_; }
  double mean() const { return n_ == 0 ? 0.0 : sum_ / static_cast<double>(n_); }

  // (1/N) sum_i (truth - x_i)^2
  double mse_against(double truth) const {
    if (n_ == 0) return 0.0;
    const double n = static_cast<double>(n_);
    return truth * truth - 2.0 * truth * sum_ / n + sum_sq_ / n;
  }

 private:
  std::int64_t n_ = 0;
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
};

struct Metrics {
  int binary_error = 0;        // 1 iff sign(estimate) != sign(truth)
  double absolute_error = 0.0;
  double mse = 0.0;
};

Metrics metrics(const EstimateSeries& series, double true_delta);

}  // namespace ranklab
