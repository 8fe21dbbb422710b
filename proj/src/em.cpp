#include "ranklab/em.hpp"

#include <cmath>
#include <limits>

#include "ranklab/policies.hpp"

namespace ranklab {
namespace {

struct Impression {
  std::uint64_t doc_key;
  int rank;  // 1-based
  bool clicked;
};

double loglik_of(const std::vector<Impression>& impressions, const std::vector<double>& theta,
                 const std::unordered_map<std::uint64_t, double>& zeta) {
  double total = 0.0;
  for (const Impression& imp : impressions) {
    const double p = theta[imp.rank - 1] * zeta.at(imp.doc_key);
    if (imp.clicked) {
      if (p <= 0.0) return -std::numeric_limits<double>::infinity();
      total += std::log(p);
    } else {
      if (p >= 1.0) return -std::numeric_limits<double>::infinity();
      total += std::log1p(-p);
    }
  }
  return total;
}

}  // namespace

EMResult em_fit(const InteractionLog& log, const EMConfig& config) {
  if (log.empty()) throw InvalidInputError("em_fit needs a non-empty log");

  int max_rank = 0;
  std::vector<Impression> impressions;
  for (const InteractionRecord& rec : log.records) {
    max_rank = std::max(max_rank, rec.ranking.length());
    for (int i = 0; i < rec.ranking.length(); ++i) {
      impressions.push_back({ClickModel::zeta_key(rec.query_id, rec.ranking.docs[i]), i + 1,
                             rec.clicks[i] != 0});
    }
  }

  std::vector<double> theta(max_rank);
  if (config.theta_init.empty()) {
    for (int r = 1; r <= max_rank; ++r) theta[r - 1] = 1.0 / r;
  } else {
    if (static_cast<int>(config.theta_init.size()) < max_rank) {
      throw InvalidInputError("theta_init shorter than the deepest logged rank");
    }
    theta.assign(config.theta_init.begin(), config.theta_init.begin() + max_rank);
  }

  std::unordered_map<std::uint64_t, double> zeta;
  std::unordered_map<std::uint64_t, std::int64_t> doc_count;
  std::vector<std::int64_t> rank_count(max_rank, 0);
  for (const Impression& imp : impressions) {
    zeta.emplace(imp.doc_key, config.zeta_init);
    ++doc_count[imp.doc_key];
    ++rank_count[imp.rank - 1];
  }

  EMResult result;
  result.zeta_default = config.zeta_init;
  result.rank_impressions = rank_count;
  result.loglik_trace.push_back(loglik_of(impressions, theta, zeta));

  std::vector<double> exam_sum(max_rank);
  std::unordered_map<std::uint64_t, double> rel_sum;
  rel_sum.reserve(zeta.size());
  for (int iter = 0; iter < config.max_iters; ++iter) {
    std::fill(exam_sum.begin(), exam_sum.end(), 0.0);
    for (auto& [key, unused] : zeta) rel_sum[key] = 0.0;

    for (const Impression& imp : impressions) {
      const double t = theta[imp.rank - 1];
      const double z = zeta[imp.doc_key];
      double exam, rel;
      if (imp.clicked) {
        exam = 1.0;
        rel = 1.0;
      } else {
        const double denom = 1.0 - t * z;
        exam = t * (1.0 - z) / denom;
        rel = (1.0 - t) * z / denom;
      }
      exam_sum[imp.rank - 1] += exam;
      rel_sum[imp.doc_key] += rel;
    }

    for (int r = 0; r < max_rank; ++r) {
      if (rank_count[r] > 0) theta[r] = exam_sum[r] / rank_count[r];
    }
    for (auto& [key, value] : zeta) value = rel_sum[key] / doc_count[key];

    result.loglik_trace.push_back(loglik_of(impressions, theta, zeta));
    const std::size_t n = result.loglik_trace.size();
    if (std::abs(result.loglik_trace[n - 1] - result.loglik_trace[n - 2]) < config.tol) break;
  }

  // Identifiability: the likelihood only pins down theta * zeta, so anchor
  // theta_1 = 1 and absorb the old scale into zeta.
  const double anchor = theta.empty() ? 1.0 : theta[0];
  if (anchor > 0.0) {
    for (double& t : theta) t /= anchor;
    for (auto& [key, value] : zeta) value *= anchor;
    result.zeta_default *= anchor;
  }
  for (int r = 0; r < max_rank; ++r) {
    if (rank_count[r] == 0) theta[r] = std::numeric_limits<double>::quiet_NaN();
  }
  result.theta = std::move(theta);
  result.zeta = std::move(zeta);
  return result;
}

double em_loglik(const InteractionLog& log, std::span<const double> theta,
                 const std::unordered_map<std::uint64_t, double>& zeta, double zeta_default) {
  double total = 0.0;
  for (const InteractionRecord& rec : log.records) {
    for (int i = 0; i < rec.ranking.length(); ++i) {
      if (i >= static_cast<int>(theta.size())) {
        throw InvalidInputError("theta shorter than a logged ranking");
      }
      auto it = zeta.find(ClickModel::zeta_key(rec.query_id, rec.ranking.docs[i]));
      const double z = it == zeta.end() ? zeta_default : it->second;
      const double p = theta[i] * z;
      if (rec.clicks[i]) {
        if (p <= 0.0) return -std::numeric_limits<double>::infinity();
        total += std::log(p);
      } else {
        if (p >= 1.0) return -std::numeric_limits<double>::infinity();
        total += std::log1p(-p);
      }
    }
  }
  return total;
}

void save_em_result(const EMResult& result, std::ostream& out) {
  std::vector<MatrixBlock> blocks(2);
  blocks[0].rows = 1;
  blocks[0].cols = static_cast<int>(result.theta.size());
  blocks[0].data = result.theta;
  blocks[1].rows = static_cast<int>(result.zeta.size());
  blocks[1].cols = 3;
  for (const auto& [key, value] : result.zeta) {
    blocks[1].data.push_back(static_cast<double>(key >> 32));
    blocks[1].data.push_back(static_cast<double>(key & 0xFFFFFFFFULL));
    blocks[1].data.push_back(value);
  }
  write_blocks(out, blocks);
}

EMResult load_em_result(std::istream& in) {
  const std::vector<MatrixBlock> blocks = read_blocks(in);
  if (blocks.size() != 2 || blocks[0].rows != 1 || blocks[1].cols != 3) {
    throw InvalidInputError("not a fitted click-model checkpoint");
  }
  EMResult result;
  result.theta = blocks[0].data;
  result.rank_impressions.assign(result.theta.size(), 0);
  for (int r = 0; r < blocks[1].rows; ++r) {
    const int qid = static_cast<int>(blocks[1].data[r * 3]);
    const DocId d = static_cast<DocId>(blocks[1].data[r * 3 + 1]);
    result.zeta[ClickModel::zeta_key(qid, d)] = blocks[1].data[r * 3 + 2];
  }
  return result;
}

}  // namespace ranklab
