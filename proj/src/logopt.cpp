#include "ranklab/logopt.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ranklab {
namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void check_context(const VarianceContext& ctx, const Query& query) {
  if (static_cast<int>(ctx.zeta_hat.size()) != query.num_docs()) {
    throw InvalidInputError("variance context zeta size does not match query");
  }
  if (static_cast<int>(ctx.exposure.docs.size()) != query.num_docs()) {
    throw InvalidInputError("variance context exposure size does not match query");
  }
  if (ctx.theta_hat.empty()) throw InvalidInputError("variance context needs theta");
  if (ctx.gradient_samples < 1) throw InvalidInputError("gradient sample count must be >= 1");
}

}  // namespace

double exact_variance(const Policy& logging_policy, const VarianceContext& ctx,
                      const Query& query, int cap) {
  check_context(ctx, query);
  const std::vector<double> rho =
      exposure_under_exact(logging_policy, query, ctx.theta_hat, cap);
  for (DocId d = 0; d < query.num_docs(); ++d) {
    if (rho[d] <= kPropensityFloor && ctx.zeta_hat[d] > 0.0 &&
        ctx.exposure.at(d).lambda != 0.0) {
      throw SupportViolationError("doc " + std::to_string(d) +
                                  " has zero propensity but nonzero clickable exposure diff");
    }
  }

  double variance = 0.0;
  for_each_ranking(
      logging_policy, query, static_cast<int>(ctx.theta_hat.size()),
      [&](double rank_prob, const Ranking& r) {
        const int len = r.length();
        for (std::uint32_t mask = 0; mask < (1u << len); ++mask) {
          double pattern_prob = 1.0;
          double x = 0.0;
          for (int i = 0; i < len && pattern_prob > 0.0; ++i) {
            const DocId d = r.docs[i];
            const double p_click = ctx.theta_hat[i] * ctx.zeta_hat[d];
            if (mask & (1u << i)) {
              pattern_prob *= p_click;
              x += ctx.exposure.at(d).lambda / rho[d];
            } else {
              pattern_prob *= 1.0 - p_click;
            }
          }
          if (pattern_prob <= 0.0) continue;
          const double err = ctx.delta_hat - x;
          variance += rank_prob * pattern_prob * err * err;
        }
      },
      cap);
  return variance;
}

GradientEstimate approx_variance_gradient(const ScoreNetworkPolicy& network,
                                          double mixture_epsilon, const VarianceContext& ctx,
                                          const Query& query, RandomStream& rng) {
  check_context(ctx, query);
  const int n = query.num_docs();
  const int pcount = network.parameter_count();
  const int len = std::min<int>(static_cast<int>(ctx.theta_hat.size()), n);
  const int M = ctx.gradient_samples;
  const double keep = 1.0 - mixture_epsilon;

  // Scores and score gradients are fixed within one call.
  std::vector<double> scores(n);
  std::vector<std::vector<double>> score_grad(n, std::vector<double>(pcount));
  for (DocId d = 0; d < n; ++d) {
    scores[d] = network.score_with_grad(query.features[d], score_grad[d]);
  }

  std::vector<std::vector<double>> rho_grad(n, std::vector<double>(pcount, 0.0));
  std::vector<double> freq_sum(pcount, 0.0);
  std::vector<double> logprob_sum(pcount);  // running sum of dlog pi over placed ranks
  std::vector<double> gbar(pcount);
  std::vector<double> net_probs;
  std::vector<DocId> remaining;
  std::vector<double> mix_probs;

  struct Sample {
    double residual;  // delta_hat - sum lambda/rho over clicks
    std::vector<DocId> clicked;
  };
  std::vector<Sample> samples(M);
  double mean_sq = 0.0;

  for (int m = 0; m < M; ++m) {
    remaining.resize(n);
    for (DocId d = 0; d < n; ++d) remaining[d] = d;
    std::fill(logprob_sum.begin(), logprob_sum.end(), 0.0);
    double x = 0.0;
    samples[m].clicked.clear();

    for (int pos = 0; pos < len; ++pos) {
      plackett_luce_probs(scores, remaining, net_probs);
      const double uniform = 1.0 / static_cast<double>(remaining.size());
      mix_probs.resize(remaining.size());
      for (std::size_t i = 0; i < remaining.size(); ++i) {
        mix_probs[i] = keep * net_probs[i] + mixture_epsilon * uniform;
      }

      std::fill(gbar.begin(), gbar.end(), 0.0);
      for (std::size_t i = 0; i < remaining.size(); ++i) {
        const std::vector<double>& g = score_grad[remaining[i]];
        const double w = net_probs[i];
        for (int p = 0; p < pcount; ++p) gbar[p] += w * g[p];
      }

      // Propensity gradient terms for every doc still placeable at this
      // rank: theta_k * (d pi(d|prefix) + pi(d|prefix) * sum dlog pi).
      const double theta_k = ctx.theta_hat[pos];
      if (theta_k != 0.0) {
        for (std::size_t i = 0; i < remaining.size(); ++i) {
          const DocId d = remaining[i];
          const std::vector<double>& g = score_grad[d];
          const double dprob_w = keep * net_probs[i];
          std::vector<double>& acc = rho_grad[d];
          for (int p = 0; p < pcount; ++p) {
            acc[p] += theta_k * (dprob_w * (g[p] - gbar[p]) + mix_probs[i] * logprob_sum[p]);
          }
        }
      }

      const int pick = sample_categorical(mix_probs, rng);
      const DocId d = remaining[pick];
      const double w = keep * net_probs[pick] / mix_probs[pick];
      const std::vector<double>& g = score_grad[d];
      for (int p = 0; p < pcount; ++p) logprob_sum[p] += w * (g[p] - gbar[p]);

      if (rng.bernoulli(theta_k * ctx.zeta_hat[d])) {
        const double rho = ctx.exposure.at(d).rho;
        if (rho <= kPropensityFloor) {
          throw SupportViolationError("sampled click on doc " + std::to_string(d) +
                                      " with zero propensity");
        }
        x += ctx.exposure.at(d).lambda / rho;
        samples[m].clicked.push_back(d);
      }
      remaining.erase(remaining.begin() + pick);
    }

    const double residual = ctx.delta_hat - x;
    samples[m].residual = residual;
    mean_sq += residual * residual;
    for (int p = 0; p < pcount; ++p) freq_sum[p] += residual * residual * logprob_sum[p];
  }

  const double inv_m = 1.0 / static_cast<double>(M);
  for (DocId d = 0; d < n; ++d) {
    for (double& v : rho_grad[d]) v *= inv_m;
  }

  std::vector<double> error_sum(pcount, 0.0);
  for (const Sample& s : samples) {
    const double coeff = 2.0 * s.residual;
    for (DocId d : s.clicked) {
      const ExposureEntry& e = ctx.exposure.at(d);
      const double w = coeff * e.lambda / (e.rho * e.rho);
      const std::vector<double>& rg = rho_grad[d];
      for (int p = 0; p < pcount; ++p) error_sum[p] += w * rg[p];
    }
  }

  GradientEstimate out;
  out.grad.resize(pcount);
  for (int p = 0; p < pcount; ++p) out.grad[p] = (freq_sum[p] + error_sum[p]) * inv_m;
  out.mean_squared_error = mean_sq * inv_m;
  return out;
}

LogOptResult train_logging_policy(std::span<const Query> queries,
                                  std::span<const double> query_weights,
                                  std::vector<VarianceContext> contexts,
                                  const OptimizerConfig& config, RandomStream& rng) {
  if (queries.empty() || queries.size() != query_weights.size() ||
      queries.size() != contexts.size()) {
    throw InvalidInputError("training needs matching queries, weights, and contexts");
  }
  const int input_dim = static_cast<int>(queries[0].features.at(0).size());

  LogOptResult result;
  result.network =
      std::make_shared<ScoreNetworkPolicy>(input_dim, config.network_hidden, rng.next_u64());
  result.policy = std::make_shared<MixturePolicy>(result.network, config.epsilon);
  result.trace.reserve(config.steps);

  for (VarianceContext& ctx : contexts) ctx.gradient_samples = config.gradient_samples;
  std::vector<int> last_refresh(queries.size(), -1);

  for (int step = 0; step < config.steps; ++step) {
    const int qi = sample_categorical(query_weights, rng);
    if (last_refresh[qi] < 0 || step - last_refresh[qi] >= config.rho_refresh_interval) {
      const McExposure mc = exposure_under_mc(*result.policy, queries[qi],
                                              contexts[qi].theta_hat,
                                              config.rho_refresh_samples, rng);
      for (DocId d = 0; d < queries[qi].num_docs(); ++d) {
        contexts[qi].exposure.docs[d].rho = mc.rho[d];
        contexts[qi].exposure.docs[d].rho_std_error = mc.std_error[d];
      }
      contexts[qi].exposure.mc_samples = config.rho_refresh_samples;
      last_refresh[qi] = step;
    }

    const GradientEstimate ge = approx_variance_gradient(*result.network, config.epsilon,
                                                         contexts[qi], queries[qi], rng);
    result.network->apply_gradient_step(ge.grad, config.learning_rate);
    result.trace.push_back({step, ge.mean_squared_error, l2_norm(ge.grad)});
  }
  return result;
}

namespace {

// Exposure of one comparison policy under theta; deterministic rankers get
// the direct rank lookup, everything else is enumerated or sampled.
std::vector<double> comparison_exposure(const Policy& policy, const Query& query,
                                        std::span<const double> theta, RandomStream& rng) {
  if (const auto* det = dynamic_cast<const DeterministicPolicy*>(&policy)) {
    const Ranking top = det->top_k(query, static_cast<int>(theta.size()));
    std::vector<double> rho(query.num_docs(), 0.0);
    for (int i = 0; i < top.length(); ++i) rho[top.docs[i]] = theta[i];
    return rho;
  }
  if (query.num_docs() <= kEnumerationCap) {
    return exposure_under_exact(policy, query, theta);
  }
  return exposure_under_mc(policy, query, theta, 10000, rng).rho;
}

}  // namespace

LogOptOutput optimize_logging_policy(const InteractionLog& log, const Dataset& dataset,
                                     const Policy& policy1, const Policy& policy2,
                                     const OptimizerConfig& config, RandomStream& rng) {
  if (log.empty()) throw InvalidInputError("optimize_logging_policy needs a non-empty log");

  LogOptOutput out;
  out.em = em_fit(log);

  // Ranks the log never exercised have no estimate; treat them as
  // unexaminable for the optimization.
  std::vector<double> theta_hat = out.em.theta;
  for (double& t : theta_hat) {
    if (std::isnan(t)) t = 0.0;
  }

  std::map<int, std::size_t> query_index;  // qid -> dataset index
  for (std::size_t i = 0; i < dataset.queries.size(); ++i) {
    query_index[dataset.queries[i].id] = i;
  }

  // Empirical query counts and per-(query, doc) mean examination under the
  // fitted bias; the latter is the propensity estimate for the historical
  // interactions.
  std::map<int, std::int64_t> counts;
  std::map<std::uint64_t, double> exam_sum;
  for (const InteractionRecord& rec : log.records) {
    if (!query_index.count(rec.query_id)) {
      throw InvalidInputError("log references qid " + std::to_string(rec.query_id) +
                              " missing from the dataset");
    }
    ++counts[rec.query_id];
    for (int i = 0; i < rec.ranking.length(); ++i) {
      exam_sum[ClickModel::zeta_key(rec.query_id, rec.ranking.docs[i])] += theta_hat[i];
    }
  }

  std::vector<const Query*> queries;
  std::vector<double> weights;
  std::vector<VarianceContext> contexts;
  std::map<int, std::size_t> context_of;
  for (const auto& [qid, count] : counts) {
    const Query& query = dataset.queries[query_index[qid]];
    VarianceContext ctx;
    ctx.theta_hat = theta_hat;
    ctx.zeta_hat.resize(query.num_docs());
    for (DocId d = 0; d < query.num_docs(); ++d) ctx.zeta_hat[d] = out.em.zeta_at(qid, d);
    const std::vector<double> e1 = comparison_exposure(policy1, query, theta_hat, rng);
    const std::vector<double> e2 = comparison_exposure(policy2, query, theta_hat, rng);
    ctx.exposure.docs.resize(query.num_docs());
    for (DocId d = 0; d < query.num_docs(); ++d) {
      ctx.exposure.docs[d].lambda = e1[d] - e2[d];
      auto it = exam_sum.find(ClickModel::zeta_key(qid, d));
      ctx.exposure.docs[d].rho = it == exam_sum.end() ? 0.0 : it->second / count;
    }
    context_of[qid] = contexts.size();
    queries.push_back(&query);
    weights.push_back(static_cast<double>(count) / static_cast<double>(log.size()));
    contexts.push_back(std::move(ctx));
  }

  // IPS estimate of the CTR difference over the historical log.
  double sum = 0.0;
  for (const InteractionRecord& rec : log.records) {
    const VarianceContext& ctx = contexts[context_of[rec.query_id]];
    sum += ips_estimate(rec, ctx.exposure);
  }
  out.delta_hat = sum / static_cast<double>(log.size());
  for (VarianceContext& ctx : contexts) ctx.delta_hat = out.delta_hat;

  std::vector<Query> query_values;
  query_values.reserve(queries.size());
  for (const Query* q : queries) query_values.push_back(*q);
  out.training = train_logging_policy(query_values, weights, std::move(contexts), config, rng);
  return out;
}

LogOptResult optimize_logging_policy_oracle(const QueryDistribution& dist,
                                            const Policy& policy1, const Policy& policy2,
                                            const ClickModel& model, double true_delta,
                                            const OptimizerConfig& config, RandomStream& rng) {
  dist.validate();
  std::vector<VarianceContext> contexts;
  contexts.reserve(dist.queries.size());
  for (const Query& query : dist.queries) {
    VarianceContext ctx;
    ctx.delta_hat = true_delta;
    ctx.theta_hat = model.theta;
    ctx.zeta_hat.resize(query.num_docs());
    for (DocId d = 0; d < query.num_docs(); ++d) ctx.zeta_hat[d] = model.zeta_at(query.id, d);
    const std::vector<double> e1 = comparison_exposure(policy1, query, model.theta, rng);
    const std::vector<double> e2 = comparison_exposure(policy2, query, model.theta, rng);
    ctx.exposure.docs.resize(query.num_docs());
    for (DocId d = 0; d < query.num_docs(); ++d) {
      ctx.exposure.docs[d].lambda = e1[d] - e2[d];
    }
    contexts.push_back(std::move(ctx));
  }
  return train_logging_policy(dist.queries, dist.weights, std::move(contexts), config, rng);
}

}  // namespace ranklab
