#include "ranklab/policies.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ranklab {
namespace {

bool in_prefix(std::span<const DocId> prefix, DocId d) {
  return std::find(prefix.begin(), prefix.end(), d) != prefix.end();
}

DocId next_unplaced(const std::vector<DocId>& order, std::span<const DocId> prefix) {
  for (DocId d : order) {
    if (!in_prefix(prefix, d)) return d;
  }
  throw InvalidInputError("all docs already placed");
}

}  // namespace

Ranking DeterministicPolicy::top_k(const Query& query, int k) const {
  const std::vector<DocId> order = ordering(query);
  const int len = std::min<int>(k, static_cast<int>(order.size()));
  Ranking out;
  out.docs.assign(order.begin(), order.begin() + len);
  return out;
}

Ranking DeterministicPolicy::sample_ranking(const Query& query, int k, RandomStream&) const {
  if (k < 1) throw InvalidInputError("sample_ranking: k must be >= 1");
  return top_k(query, k);
}

double DeterministicPolicy::placement_prob_impl(const Query& query,
                                                std::span<const DocId> prefix,
                                                DocId doc) const {
  return next_unplaced(ordering(query), prefix) == doc ? 1.0 : 0.0;
}

std::vector<DocId> FixedRankingPolicy::ordering(const Query& query) const {
  if (static_cast<int>(order_.size()) != query.num_docs()) {
    throw InvalidInputError("fixed ranking covers " + std::to_string(order_.size()) +
                            " docs but query has " + std::to_string(query.num_docs()));
  }
  return order_;
}

std::vector<DocId> LinearRankerPolicy::ordering(const Query& query) const {
  std::vector<double> scores(query.num_docs());
  for (DocId d = 0; d < query.num_docs(); ++d) {
    const auto& x = query.features[d];
    double s = 0.0;
    const std::size_t n = std::min(x.size(), weights_.size());
    for (std::size_t i = 0; i < n; ++i) s += weights_[i] * x[i];
    scores[d] = s;
  }
  std::vector<DocId> order(query.num_docs());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](DocId a, DocId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

double UniformRankingPolicy::placement_prob_impl(const Query& query,
                                                 std::span<const DocId> prefix, DocId) const {
  return 1.0 / static_cast<double>(query.num_docs() - static_cast<int>(prefix.size()));
}

ScoreNetworkPolicy::ScoreNetworkPolicy(int input_dim, int hidden, std::uint64_t init_seed)
    : input_dim_(input_dim), hidden_(hidden) {
  if (input_dim < 1 || hidden < 1) throw InvalidInputError("network dims must be >= 1");
  w1_ = 0;
  b1_ = w1_ + hidden_ * input_dim_;
  w2_ = b1_ + hidden_;
  b2_ = w2_ + hidden_ * hidden_;
  w3_ = b2_ + hidden_;
  b3_ = w3_ + hidden_;
  params_.assign(b3_ + 1, 0.0);

  RandomStream rng(init_seed);
  auto xavier = [&](int offset, int rows, int cols, int fan_in, int fan_out) {
    const double stddev = std::sqrt(2.0 / (fan_in + fan_out));
    for (int i = 0; i < rows * cols; ++i) params_[offset + i] = stddev * rng.normal();
  };
  xavier(w1_, hidden_, input_dim_, input_dim_, hidden_);
  xavier(w2_, hidden_, hidden_, hidden_, hidden_);
  xavier(w3_, 1, hidden_, hidden_, 1);
}

void ScoreNetworkPolicy::set_parameters(std::span<const double> params) {
  if (params.size() != params_.size()) throw InvalidInputError("parameter size mismatch");
  params_.assign(params.begin(), params.end());
}

void ScoreNetworkPolicy::apply_gradient_step(std::span<const double> grad,
                                             double learning_rate) {
  if (grad.size() != params_.size()) throw InvalidInputError("gradient size mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= learning_rate * grad[i];
}

double ScoreNetworkPolicy::score(std::span<const double> features) const {
  if (static_cast<int>(features.size()) != input_dim_) {
    throw InvalidInputError("feature dim " + std::to_string(features.size()) +
                            " != network input dim " + std::to_string(input_dim_));
  }
  std::vector<double> h1(hidden_), h2(hidden_);
  for (int i = 0; i < hidden_; ++i) {
    double z = params_[b1_ + i];
    const double* row = &params_[w1_ + i * input_dim_];
    for (int j = 0; j < input_dim_; ++j) z += row[j] * features[j];
    h1[i] = std::tanh(z);
  }
  for (int i = 0; i < hidden_; ++i) {
    double z = params_[b2_ + i];
    const double* row = &params_[w2_ + i * hidden_];
    for (int j = 0; j < hidden_; ++j) z += row[j] * h1[j];
    h2[i] = std::tanh(z);
  }
  double s = params_[b3_];
  for (int i = 0; i < hidden_; ++i) s += params_[w3_ + i] * h2[i];
  return s;
}

std::vector<double> ScoreNetworkPolicy::doc_scores(const Query& query) const {
  std::vector<double> scores(query.num_docs());
  for (DocId d = 0; d < query.num_docs(); ++d) scores[d] = score(query.features[d]);
  return scores;
}

double ScoreNetworkPolicy::score_with_grad(std::span<const double> features,
                                           std::span<double> grad) const {
  if (grad.size() != params_.size()) throw InvalidInputError("gradient buffer size mismatch");
  if (static_cast<int>(features.size()) != input_dim_) {
    throw InvalidInputError("feature dim mismatch");
  }
  std::vector<double> h1(hidden_), h2(hidden_);
  for (int i = 0; i < hidden_; ++i) {
    double z = params_[b1_ + i];
    const double* row = &params_[w1_ + i * input_dim_];
    for (int j = 0; j < input_dim_; ++j) z += row[j] * features[j];
    h1[i] = std::tanh(z);
  }
  for (int i = 0; i < hidden_; ++i) {
    double z = params_[b2_ + i];
    const double* row = &params_[w2_ + i * hidden_];
    for (int j = 0; j < hidden_; ++j) z += row[j] * h1[j];
    h2[i] = std::tanh(z);
  }
  double s = params_[b3_];
  for (int i = 0; i < hidden_; ++i) s += params_[w3_ + i] * h2[i];

  // Backward pass for dscore/dparams.
  grad[b3_] = 1.0;
  std::vector<double> d2(hidden_);  // dscore/dz2
  for (int i = 0; i < hidden_; ++i) {
    grad[w3_ + i] = h2[i];
    d2[i] = params_[w3_ + i] * (1.0 - h2[i] * h2[i]);
    grad[b2_ + i] = d2[i];
    double* row = &grad[w2_ + i * hidden_];
    for (int j = 0; j < hidden_; ++j) row[j] = d2[i] * h1[j];
  }
  for (int i = 0; i < hidden_; ++i) {
    double back = 0.0;
    for (int j = 0; j < hidden_; ++j) back += params_[w2_ + j * hidden_ + i] * d2[j];
    const double d1 = back * (1.0 - h1[i] * h1[i]);
    grad[b1_ + i] = d1;
    double* row = &grad[w1_ + i * input_dim_];
    for (int j = 0; j < input_dim_; ++j) row[j] = d1 * features[j];
  }
  return s;
}

double ScoreNetworkPolicy::placement_prob_impl(const Query& query,
                                               std::span<const DocId> prefix,
                                               DocId doc) const {
  const std::vector<double> scores = doc_scores(query);
  std::vector<DocId> remaining;
  for (DocId d = 0; d < query.num_docs(); ++d) {
    if (!in_prefix(prefix, d)) remaining.push_back(d);
  }
  std::vector<double> probs;
  plackett_luce_probs(scores, remaining, probs);
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    if (remaining[i] == doc) return probs[i];
  }
  return 0.0;
}

MixturePolicy::MixturePolicy(std::shared_ptr<const Policy> base, double epsilon)
    : base_(std::move(base)), epsilon_(epsilon) {
  if (!base_) throw InvalidInputError("mixture needs a base policy");
  if (epsilon_ < 0.0 || epsilon_ > 1.0) throw InvalidInputError("epsilon must be in [0,1]");
}

double MixturePolicy::placement_prob_impl(const Query& query, std::span<const DocId> prefix,
                                          DocId doc) const {
  const int unplaced = query.num_docs() - static_cast<int>(prefix.size());
  return (1.0 - epsilon_) * base_->placement_prob(query, prefix, doc) +
         epsilon_ / static_cast<double>(unplaced);
}

RankingMixturePolicy::RankingMixturePolicy(std::vector<std::shared_ptr<const Policy>> components,
                                           std::vector<double> weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty() || components_.size() != weights_.size()) {
    throw InvalidInputError("ranking mixture needs matching components and weights");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (w < 0.0) throw InvalidInputError("negative mixture weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInputError("mixture weights must sum to 1");
}

Ranking RankingMixturePolicy::sample_ranking(const Query& query, int k,
                                             RandomStream& rng) const {
  const int pick = sample_categorical(weights_, rng);
  return components_[pick]->sample_ranking(query, k, rng);
}

double RankingMixturePolicy::placement_prob_impl(const Query& query,
                                                 std::span<const DocId> prefix,
                                                 DocId doc) const {
  // Posterior over components given the prefix, then the mixture of their
  // next-placement probabilities.
  double norm = 0.0, prob = 0.0;
  for (std::size_t j = 0; j < components_.size(); ++j) {
    double prefix_prob = weights_[j];
    for (std::size_t i = 0; i < prefix.size() && prefix_prob > 0.0; ++i) {
      std::span<const DocId> sub(prefix.data(), i);
      prefix_prob *= components_[j]->placement_prob(query, sub, prefix[i]);
    }
    if (prefix_prob <= 0.0) continue;
    norm += prefix_prob;
    prob += prefix_prob * components_[j]->placement_prob(query, prefix, doc);
  }
  if (norm <= 0.0) {
    throw InvalidInputError("prefix unreachable under every mixture component");
  }
  return prob / norm;
}

void plackett_luce_probs(std::span<const double> scores, std::span<const DocId> remaining,
                         std::vector<double>& probs_out) {
  probs_out.resize(remaining.size());
  double max_score = -std::numeric_limits<double>::infinity();
  for (DocId d : remaining) max_score = std::max(max_score, scores[d]);
  double z = 0.0;
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    probs_out[i] = std::exp(scores[remaining[i]] - max_score);
    z += probs_out[i];
  }
  for (double& p : probs_out) p /= z;
}

std::vector<double> placement_logprob_grad(const ScoreNetworkPolicy& policy, const Query& query,
                                           std::span<const DocId> prefix, DocId doc) {
  if (doc < 0 || doc >= query.num_docs()) throw InvalidInputError("unknown doc id");
  std::vector<DocId> remaining;
  for (DocId d = 0; d < query.num_docs(); ++d) {
    if (!in_prefix(prefix, d)) remaining.push_back(d);
  }
  if (in_prefix(prefix, doc)) throw InvalidInputError("doc already placed");

  const int pcount = policy.parameter_count();
  std::vector<double> scores(query.num_docs(), 0.0);
  std::vector<std::vector<double>> doc_grads(remaining.size(), std::vector<double>(pcount));
  for (std::size_t i = 0; i < remaining.size(); ++i) {
    scores[remaining[i]] = policy.score_with_grad(query.features[remaining[i]], doc_grads[i]);
  }
  std::vector<double> probs;
  plackett_luce_probs(scores, remaining, probs);

  // dlog p(doc) = g_doc - sum_j p_j g_j
  std::vector<double> grad(pcount, 0.0);
  for (std::size_t j = 0; j < remaining.size(); ++j) {
    const double w = (remaining[j] == doc ? 1.0 : 0.0) - probs[j];
    if (w == 0.0) continue;
    const auto& g = doc_grads[j];
    for (int p = 0; p < pcount; ++p) grad[p] += w * g[p];
  }
  return grad;
}

void write_blocks(std::ostream& out, std::span<const MatrixBlock> blocks) {
  out << "ranklab-checkpoint 1\n";
  out.precision(17);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const MatrixBlock& b = blocks[i];
    out << "layer " << i << ' ' << b.rows << ' ' << b.cols << '\n';
    for (int r = 0; r < b.rows; ++r) {
      for (int c = 0; c < b.cols; ++c) {
        if (c) out << ' ';
        out << b.data[static_cast<std::size_t>(r) * b.cols + c];
      }
      out << '\n';
    }
  }
}

std::vector<MatrixBlock> read_blocks(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "ranklab-checkpoint") {
    throw InvalidInputError("not a ranklab checkpoint");
  }
  if (version != 1) throw InvalidInputError("unsupported checkpoint version");
  std::vector<MatrixBlock> blocks;
  std::string tag;
  while (in >> tag) {
    if (tag != "layer") throw InvalidInputError("expected 'layer', got '" + tag + "'");
    int index = 0;
    MatrixBlock b;
    if (!(in >> index >> b.rows >> b.cols) || b.rows < 0 || b.cols < 0) {
      throw InvalidInputError("malformed layer header");
    }
    if (index != static_cast<int>(blocks.size())) {
      throw InvalidInputError("layer indices out of order");
    }
    b.data.resize(static_cast<std::size_t>(b.rows) * b.cols);
    for (double& v : b.data) {
      if (!(in >> v)) throw InvalidInputError("truncated layer data");
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

void save_network(const ScoreNetworkPolicy& policy, std::ostream& out) {
  const std::span<const double> p = policy.parameters();
  const int d = policy.input_dim();
  const int h = policy.hidden();
  auto slice = [&](int offset, int rows, int cols) {
    MatrixBlock b;
    b.rows = rows;
    b.cols = cols;
    b.data.assign(p.begin() + offset, p.begin() + offset + rows * cols);
    return b;
  };
  std::vector<MatrixBlock> blocks;
  int off = 0;
  blocks.push_back(slice(off, h, d));
  off += h * d;
  blocks.push_back(slice(off, h, 1));
  off += h;
  blocks.push_back(slice(off, h, h));
  off += h * h;
  blocks.push_back(slice(off, h, 1));
  off += h;
  blocks.push_back(slice(off, 1, h));
  off += h;
  blocks.push_back(slice(off, 1, 1));
  write_blocks(out, blocks);
}

ScoreNetworkPolicy load_network(std::istream& in) {
  const std::vector<MatrixBlock> blocks = read_blocks(in);
  if (blocks.size() != 6) throw InvalidInputError("network checkpoint needs 6 layers");
  const int h = blocks[0].rows;
  const int d = blocks[0].cols;
  if (blocks[1].rows != h || blocks[2].rows != h || blocks[2].cols != h ||
      blocks[3].rows != h || blocks[4].cols != h || blocks[5].rows != 1) {
    throw InvalidInputError("inconsistent network checkpoint shapes");
  }
  ScoreNetworkPolicy policy(d, h, 0);
  std::vector<double> params;
  for (const MatrixBlock& b : blocks) params.insert(params.end(), b.data.begin(), b.data.end());
  policy.set_parameters(params);
  return policy;
}

}  // namespace ranklab
