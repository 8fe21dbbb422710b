#include "ranklab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "ranklab/em.hpp"

namespace ranklab {
namespace {

constexpr std::uint64_t kDatasetStream = 1ULL << 62;

// ---- Plackett-Luce helpers over cached doc scores ------------------------
//
// The logging policies trained by LogOpt score each doc once per query, so
// the per-segment samplers and exposure computations work from cached
// scores instead of re-running the network inside Policy::placement_prob.

Ranking sample_pl_mixture(std::span<const double> scores, double epsilon, int k,
                          RandomStream& rng) {
  const int n = static_cast<int>(scores.size());
  const int len = std::min(k, n);
  Ranking out;
  std::vector<DocId> remaining(n);
  for (int d = 0; d < n; ++d) remaining[d] = d;
  std::vector<double> probs;
  for (int step = 0; step < len; ++step) {
    plackett_luce_probs(scores, remaining, probs);
    const double uniform = 1.0 / static_cast<double>(remaining.size());
    for (double& p : probs) p = (1.0 - epsilon) * p + epsilon * uniform;
    const int pick = sample_categorical(probs, rng);
    out.docs.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + pick);
  }
  return out;
}

void for_each_pl_ranking(std::span<const double> scores, double epsilon, int k,
                         const std::function<void(double, const Ranking&)>& fn) {
  const int n = static_cast<int>(scores.size());
  const int len = std::min(k, n);
  Ranking current;
  std::vector<DocId> remaining(n);
  for (int d = 0; d < n; ++d) remaining[d] = d;
  std::vector<double> probs;
  auto recurse = [&](auto&& self, double prob) -> void {
    if (current.length() == len) {
      fn(prob, current);
      return;
    }
    std::vector<DocId> rem;
    for (DocId d = 0; d < n; ++d) {
      if (std::find(current.docs.begin(), current.docs.end(), d) == current.docs.end()) {
        rem.push_back(d);
      }
    }
    std::vector<double> p;
    plackett_luce_probs(scores, rem, p);
    const double uniform = 1.0 / static_cast<double>(rem.size());
    for (std::size_t i = 0; i < rem.size(); ++i) {
      const double step = (1.0 - epsilon) * p[i] + epsilon * uniform;
      current.docs.push_back(rem[i]);
      self(self, prob * step);
      current.docs.pop_back();
    }
  };
  recurse(recurse, 1.0);
}

std::vector<double> pl_exposure(std::span<const double> scores, double epsilon,
                                std::span<const double> theta, int mc_samples,
                                RandomStream& rng) {
  const int n = static_cast<int>(scores.size());
  std::vector<double> rho(n, 0.0);
  const int k = static_cast<int>(theta.size());
  if (n <= kEnumerationCap) {
    for_each_pl_ranking(scores, epsilon, k, [&](double prob, const Ranking& r) {
      for (int i = 0; i < r.length(); ++i) rho[r.docs[i]] += prob * theta[i];
    });
    return rho;
  }
  for (int s = 0; s < mc_samples; ++s) {
    const Ranking r = sample_pl_mixture(scores, epsilon, k, rng);
    for (int i = 0; i < r.length(); ++i) rho[r.docs[i]] += theta[i];
  }
  for (double& v : rho) v /= mc_samples;
  return rho;
}

// ---- shared per-pair precomputation ---------------------------------------

struct QueryView {
  const Query* query = nullptr;
  Ranking full1, full2;  // complete orderings by each ranker
  Ranking top1, top2;    // truncated to the display length
  std::vector<double> zeta;
};

struct PairContext {
  const ComparisonSetup* setup;
  int k = 0;
  std::vector<QueryView> views;

  explicit PairContext(const ComparisonSetup& s) : setup(&s) {
    k = s.model->display_length();
    views.resize(s.dist->queries.size());
    for (std::size_t i = 0; i < s.dist->queries.size(); ++i) {
      const Query& q = s.dist->queries[i];
      QueryView& v = views[i];
      v.query = &q;
      v.full1.docs = s.policy1->ordering(q);
      v.full2.docs = s.policy2->ordering(q);
      v.top1 = s.policy1->top_k(q, k);
      v.top2 = s.policy2->top_k(q, k);
      v.zeta.resize(q.num_docs());
      for (DocId d = 0; d < q.num_docs(); ++d) v.zeta[d] = s.model->zeta_at(q.id, d);
    }
  }
};

std::vector<std::uint8_t> simulate_clicks(const Ranking& displayed, const QueryView& view,
                                          std::span<const double> theta, RandomStream& rng) {
  std::vector<std::uint8_t> clicks(displayed.length());
  for (int i = 0; i < displayed.length(); ++i) {
    clicks[i] = rng.bernoulli(theta[i] * view.zeta[displayed.docs[i]]) ? 1 : 0;
  }
  return clicks;
}

using CheckpointSink = std::vector<CheckpointEstimate>;

// Drives the per-interaction loop shared by the stateless methods.
template <typename PerInteraction>
CheckpointSink run_simple_loop(const PairContext& ctx, std::int64_t budget,
                               std::span<const std::int64_t> checkpoints, RandomStream& rng,
                               PerInteraction&& step) {
  CheckpointSink out;
  EstimateSeries series;
  std::size_t next_cp = 0;
  for (std::int64_t i = 1; i <= budget; ++i) {
    const int qi = sample_categorical(ctx.setup->dist->weights, rng);
    series.add(step(qi, rng));
    while (next_cp < checkpoints.size() && i == checkpoints[next_cp]) {
      out.push_back({i, series});
      ++next_cp;
    }
  }
  return out;
}

ExposureTable direct_ab_exposure(const QueryView& view, std::span<const double> theta) {
  ExposureTable table;
  table.docs.resize(view.query->num_docs());
  auto theta_of = [&](const Ranking& r, DocId d) {
    const int rank = r.rank_of(d);
    return rank == 0 ? 0.0 : theta[rank - 1];
  };
  for (DocId d = 0; d < view.query->num_docs(); ++d) {
    const double t1 = theta_of(view.top1, d);
    const double t2 = theta_of(view.top2, d);
    table.docs[d].rho = 0.5 * t1 + 0.5 * t2;
    table.docs[d].lambda = t1 - t2;
  }
  return table;
}

ExposureTable uniform_exposure(const PairContext& ctx, const QueryView& view,
                               std::span<const double> theta, RandomStream& rng) {
  const UniformRankingPolicy uniform;
  if (view.query->num_docs() <= kEnumerationCap) {
    return compute_exposure_exact(uniform, *ctx.setup->policy1, *ctx.setup->policy2,
                                  *view.query, theta);
  }
  return compute_exposure_mc(uniform, *ctx.setup->policy1, *ctx.setup->policy2, *view.query,
                             theta, ctx.setup->exposure_samples, rng);
}

// Exposure difference of the two deterministic rankers under an arbitrary
// bias vector.
void fill_lambda(const QueryView& view, std::span<const double> theta, ExposureTable& table) {
  auto theta_of = [&](const Ranking& full, DocId d) {
    const int rank = full.rank_of(d);
    return rank == 0 ? 0.0 : (rank <= static_cast<int>(theta.size()) ? theta[rank - 1] : 0.0);
  };
  for (DocId d = 0; d < view.query->num_docs(); ++d) {
    table.docs[d].lambda = theta_of(view.full1, d) - theta_of(view.full2, d);
  }
}

// ---- LogOpt method state ---------------------------------------------------

struct LogOptMethodState {
  // Per segment: doc scores per query (empty scores = uniform segment).
  std::vector<std::vector<std::vector<double>>> segment_scores;
  double epsilon = 0.1;
  std::vector<double> theta_hat;  // current bias estimate used by the estimator
  // exposure tables: [segment][query index]
  std::vector<std::vector<ExposureTable>> tables;
  bool tables_built = false;

  struct StoredRecord {
    int query_index = 0;
    int segment = 0;
    Ranking ranking;
    std::vector<std::uint8_t> clicks;
  };
  std::vector<StoredRecord> records;
  InteractionLog log;
};

void rebuild_tables(const PairContext& ctx, LogOptMethodState& state, RandomStream& rng) {
  state.tables.assign(state.segment_scores.size(), {});
  for (std::size_t seg = 0; seg < state.segment_scores.size(); ++seg) {
    state.tables[seg].resize(ctx.views.size());
    for (std::size_t qi = 0; qi < ctx.views.size(); ++qi) {
      const QueryView& view = ctx.views[qi];
      ExposureTable table;
      table.docs.resize(view.query->num_docs());
      std::vector<double> rho;
      if (state.segment_scores[seg].empty()) {
        const UniformRankingPolicy uniform;
        if (view.query->num_docs() <= kEnumerationCap) {
          rho = exposure_under_exact(uniform, *view.query, state.theta_hat);
        } else {
          rho = exposure_under_mc(uniform, *view.query, state.theta_hat,
                                  ctx.setup->exposure_samples, rng)
                    .rho;
        }
      } else {
        rho = pl_exposure(state.segment_scores[seg][qi], state.epsilon, state.theta_hat,
                          ctx.setup->exposure_samples, rng);
      }
      for (DocId d = 0; d < view.query->num_docs(); ++d) table.docs[d].rho = rho[d];
      fill_lambda(view, state.theta_hat, table);
      state.tables[seg][qi] = std::move(table);
    }
  }
  state.tables_built = true;
}

EstimateSeries replay_estimates(const LogOptMethodState& state) {
  EstimateSeries series;
  InteractionRecord record;
  for (const LogOptMethodState::StoredRecord& stored : state.records) {
    record.ranking = stored.ranking;
    record.clicks = stored.clicks;
    series.add(ips_estimate(record, state.tables[stored.segment][stored.query_index]));
  }
  return series;
}

CheckpointSink run_ips_logopt(const PairContext& ctx, std::int64_t budget,
                              std::span<const std::int64_t> checkpoints, RandomStream& rng) {
  const ComparisonSetup& setup = *ctx.setup;
  LogOptMethodState state;
  state.epsilon = setup.opt.epsilon;
  state.segment_scores.push_back({});  // segment 0 logs uniformly
  // Until the first scheduled refit there is no fitted bias; the estimator
  // uses the EM initialization.
  state.theta_hat.resize(ctx.k);
  for (int r = 1; r <= ctx.k; ++r) state.theta_hat[r - 1] = 1.0 / r;

  Dataset dataset_view;
  dataset_view.queries = setup.dist->queries;
  dataset_view.feature_dim =
      static_cast<int>(setup.dist->queries.front().features.front().size());

  std::vector<std::int64_t> schedule;
  for (std::int64_t point : setup.opt.update_schedule) {
    if (point <= budget) schedule.push_back(point);
  }
  std::sort(schedule.begin(), schedule.end());

  CheckpointSink out;
  std::size_t next_cp = 0, next_refit = 0;
  for (std::int64_t i = 1; i <= budget; ++i) {
    const int qi = sample_categorical(setup.dist->weights, rng);
    const QueryView& view = ctx.views[qi];
    Ranking displayed;
    if (state.segment_scores.back().empty()) {
      const UniformRankingPolicy uniform;
      displayed = uniform.sample_ranking(*view.query, ctx.k, rng);
    } else {
      displayed = sample_pl_mixture(state.segment_scores.back()[qi], state.epsilon, ctx.k, rng);
    }
    std::vector<std::uint8_t> clicks = simulate_clicks(displayed, view, setup.model->theta, rng);

    state.records.push_back({qi, static_cast<int>(state.segment_scores.size()) - 1, displayed,
                             clicks});
    state.log.records.push_back({view.query->id, std::move(displayed), std::move(clicks)});

    const bool refit_now = next_refit < schedule.size() && i == schedule[next_refit];
    if (refit_now) {
      ++next_refit;
      if (i < budget) {
        // Full refit: new bias estimate and a freshly optimized logging
        // policy for the next segment.
        const LogOptOutput output = optimize_logging_policy(
            state.log, dataset_view, *setup.policy1, *setup.policy2, setup.opt, rng);
        state.theta_hat = output.em.theta;
        std::vector<std::vector<double>> scores(ctx.views.size());
        for (std::size_t q = 0; q < ctx.views.size(); ++q) {
          scores[q] = output.training.network->doc_scores(*ctx.views[q].query);
        }
        state.segment_scores.push_back(std::move(scores));
      } else {
        // Terminal refit: no more logging, only the bias estimate improves.
        state.theta_hat = em_fit(state.log).theta;
      }
      for (double& t : state.theta_hat) {
        if (std::isnan(t)) t = 0.0;
      }
      rebuild_tables(ctx, state, rng);
    }

    while (next_cp < checkpoints.size() && i == checkpoints[next_cp]) {
      if (!state.tables_built) rebuild_tables(ctx, state, rng);
      out.push_back({i, replay_estimates(state)});
      ++next_cp;
    }
  }
  return out;
}

CheckpointSink run_ips_oracle_logopt(const PairContext& ctx, std::int64_t budget,
                                     std::span<const std::int64_t> checkpoints,
                                     RandomStream& rng) {
  const ComparisonSetup& setup = *ctx.setup;
  const LogOptResult trained = optimize_logging_policy_oracle(
      *setup.dist, *setup.policy1, *setup.policy2, *setup.model, setup.true_delta, setup.opt,
      rng);

  std::vector<std::vector<double>> scores(ctx.views.size());
  std::vector<ExposureTable> tables(ctx.views.size());
  for (std::size_t qi = 0; qi < ctx.views.size(); ++qi) {
    const QueryView& view = ctx.views[qi];
    scores[qi] = trained.network->doc_scores(*view.query);
    ExposureTable table;
    table.docs.resize(view.query->num_docs());
    const std::vector<double> rho = pl_exposure(scores[qi], setup.opt.epsilon,
                                                setup.model->theta, setup.exposure_samples,
                                                rng);
    for (DocId d = 0; d < view.query->num_docs(); ++d) table.docs[d].rho = rho[d];
    fill_lambda(view, setup.model->theta, table);
    tables[qi] = std::move(table);
  }

  InteractionRecord record;
  return run_simple_loop(ctx, budget, checkpoints, rng, [&](int qi, RandomStream& r) {
    const QueryView& view = ctx.views[qi];
    record.ranking = sample_pl_mixture(scores[qi], setup.opt.epsilon, ctx.k, r);
    record.clicks = simulate_clicks(record.ranking, view, setup.model->theta, r);
    return ips_estimate(record, tables[qi]);
  });
}

}  // namespace

std::string method_name(Method method) {
  switch (method) {
    case Method::kAB: return "ab";
    case Method::kTDI: return "tdi";
    case Method::kPI: return "pi";
    case Method::kOI: return "oi";
    case Method::kIPSUniform: return "ips-uniform";
    case Method::kIPSAB: return "ips-ab";
    case Method::kIPSLogOpt: return "ips-logopt";
    case Method::kIPSOracleLogOpt: return "ips-oracle-logopt";
  }
  throw InvalidInputError("unknown method");
}

Method method_from_name(const std::string& name) {
  for (Method m : {Method::kAB, Method::kTDI, Method::kPI, Method::kOI, Method::kIPSUniform,
                   Method::kIPSAB, Method::kIPSLogOpt, Method::kIPSOracleLogOpt}) {
    if (method_name(m) == name) return m;
  }
  throw InvalidInputError("unknown method '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (num_pairs < 1) throw InvalidInputError("num_pairs must be >= 1");
  if (budget < 1) throw InvalidInputError("budget must be >= 1");
  if (methods.empty()) throw InvalidInputError("no methods selected");
  if (threads < 1) throw InvalidInputError("threads must be >= 1");
  std::int64_t prev = 0;
  for (std::int64_t cp : checkpoints) {
    if (cp <= prev) throw InvalidInputError("checkpoints must be strictly increasing");
    if (cp > budget) throw InvalidInputError("checkpoint beyond the query budget");
    prev = cp;
  }
}

std::vector<CheckpointEstimate> run_method(const ComparisonSetup& setup, Method method,
                                           std::int64_t budget,
                                           std::span<const std::int64_t> checkpoints,
                                           RandomStream& rng) {
  const PairContext ctx(setup);
  switch (method) {
    case Method::kAB: {
      InteractionRecord record;
      return run_simple_loop(ctx, budget, checkpoints, rng, [&](int qi, RandomStream& r) {
        const QueryView& view = ctx.views[qi];
        const bool is_1 = r.bernoulli(0.5);
        record.ranking = is_1 ? view.top1 : view.top2;
        record.clicks = simulate_clicks(record.ranking, view, setup.model->theta, r);
        return ab_estimate(record, is_1 ? 1 : 2, 0.5);
      });
    }
    case Method::kTDI: {
      return run_simple_loop(ctx, budget, checkpoints, rng, [&](int qi, RandomStream& r) {
        const QueryView& view = ctx.views[qi];
        const TDIResult result = tdi_interleave(view.full1, view.full2, r, ctx.k);
        const auto clicks = simulate_clicks(result.ranking, view, setup.model->theta, r);
        return static_cast<double>(tdi_outcome(result, clicks));
      });
    }
    case Method::kPI: {
      return run_simple_loop(ctx, budget, checkpoints, rng, [&](int qi, RandomStream& r) {
        const QueryView& view = ctx.views[qi];
        const Ranking displayed =
            pi_interleave(view.full1, view.full2, setup.pi, r, ctx.k);
        const auto clicks = simulate_clicks(displayed, view, setup.model->theta, r);
        return pi_expected_outcome(displayed, clicks, view.full1, view.full2, setup.pi);
      });
    }
    case Method::kOI: {
      std::vector<OIPlan> plans(ctx.views.size());
      for (std::size_t qi = 0; qi < ctx.views.size(); ++qi) {
        plans[qi] = oi_plan(ctx.views[qi].full1, ctx.views[qi].full2, setup.model->theta);
      }
      return run_simple_loop(ctx, budget, checkpoints, rng, [&](int qi, RandomStream& r) {
        const QueryView& view = ctx.views[qi];
        const OIPlan& plan = plans[qi];
        const Ranking& displayed = plan.allowed[sample_categorical(plan.probs, r)];
        const auto clicks = simulate_clicks(displayed, view, setup.model->theta, r);
        return oi_outcome(plan, displayed, clicks);
      });
    }
    case Method::kIPSUniform: {
      std::vector<ExposureTable> tables(ctx.views.size());
      for (std::size_t qi = 0; qi < ctx.views.size(); ++qi) {
        tables[qi] = uniform_exposure(ctx, ctx.views[qi], setup.model->theta, rng);
      }
      const UniformRankingPolicy uniform;
      InteractionRecord record;
      return run_simple_loop(ctx, budget, checkpoints, rng, [&](int qi, RandomStream& r) {
        const QueryView& view = ctx.views[qi];
        record.ranking = uniform.sample_ranking(*view.query, ctx.k, r);
        record.clicks = simulate_clicks(record.ranking, view, setup.model->theta, r);
        return ips_estimate(record, tables[qi]);
      });
    }
    case Method::kIPSAB: {
      std::vector<ExposureTable> tables(ctx.views.size());
      for (std::size_t qi = 0; qi < ctx.views.size(); ++qi) {
        tables[qi] = direct_ab_exposure(ctx.views[qi], setup.model->theta);
      }
      InteractionRecord record;
      return run_simple_loop(ctx, budget, checkpoints, rng, [&](int qi, RandomStream& r) {
        const QueryView& view = ctx.views[qi];
        record.ranking = r.bernoulli(0.5) ? view.top1 : view.top2;
        record.clicks = simulate_clicks(record.ranking, view, setup.model->theta, r);
        return ips_estimate(record, tables[qi]);
      });
    }
    case Method::kIPSLogOpt:
      return run_ips_logopt(ctx, budget, checkpoints, rng);
    case Method::kIPSOracleLogOpt:
      return run_ips_oracle_logopt(ctx, budget, checkpoints, rng);
  }
  throw InvalidInputError("unknown method");
}

Dataset experiment_dataset(const ExperimentConfig& config) {
  Dataset dataset;
  if (config.dataset_file.empty()) {
    RandomStream data_rng(RandomStream::derive_seed(config.seed, kDatasetStream));
    dataset = generate_synthetic(config.synthetic_queries, config.synthetic_docs,
                                 config.synthetic_dim, data_rng);
  } else {
    std::ifstream in(config.dataset_file);
    if (!in) throw InvalidInputError("cannot open dataset file " + config.dataset_file);
    dataset = parse_letor(in);
  }
  std::erase_if(dataset.queries, [](const Query& q) { return q.num_docs() < 2; });
  if (dataset.queries.empty()) {
    throw InvalidInputError("dataset has no query with at least 2 docs");
  }
  return dataset;
}

RankerPair experiment_ranker_pair(const ExperimentConfig& config, const Dataset& dataset,
                                  int pair) {
  const std::uint64_t base = static_cast<std::uint64_t>(pair) * 16;
  RandomStream rng1(RandomStream::derive_seed(config.seed, base + 1));
  RandomStream rng2(RandomStream::derive_seed(config.seed, base + 2));
  RankerPair out;
  out.ranker1 = train_linear_ranker(dataset, config.ranker_train_queries,
                                    config.feature_fraction, rng1);
  out.ranker2 = train_linear_ranker(dataset, config.ranker_train_queries,
                                    config.feature_fraction, rng2);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();

  const Dataset dataset = experiment_dataset(config);
  const ClickModel model = build_click_model(dataset, config.sim);
  const QueryDistribution dist = QueryDistribution::uniform_over(dataset.queries);

  std::vector<std::int64_t> checkpoints = config.checkpoints;
  if (checkpoints.empty()) {
    for (std::int64_t cp = 10; cp < config.budget; cp *= 10) checkpoints.push_back(cp);
    checkpoints.push_back(config.budget);
  }

  struct PairOutput {
    std::vector<ResultRow> rows;
    std::vector<CellTiming> timings;
  };
  std::vector<PairOutput> outputs(config.num_pairs);

  auto run_pair = [&](int pair) {
    PairOutput& out = outputs[pair];
    const std::uint64_t base = static_cast<std::uint64_t>(pair) * 16;
    RankerPair rankers;
    try {
      rankers = experiment_ranker_pair(config, dataset, pair);
    } catch (const Error& e) {
      for (Method m : config.methods) {
        ResultRow row;
        row.pair = pair;
        row.method = m;
        row.failed = true;
        row.error = e.what();
        out.rows.push_back(row);
      }
      return;
    }
    const LinearRankerPolicy p1(rankers.ranker1.weights);
    const LinearRankerPolicy p2(rankers.ranker2.weights);

    double true_delta = 0.0;
    for (std::size_t qi = 0; qi < dist.queries.size(); ++qi) {
      const Query& q = dist.queries[qi];
      true_delta += dist.weights[qi] *
                    (expected_ctr_ranking(p1.top_k(q, model.display_length()), q, model) -
                     expected_ctr_ranking(p2.top_k(q, model.display_length()), q, model));
    }

    ComparisonSetup setup;
    setup.dist = &dist;
    setup.model = &model;
    setup.policy1 = &p1;
    setup.policy2 = &p2;
    setup.true_delta = true_delta;
    setup.opt = config.opt;
    setup.pi = config.pi;
    setup.exposure_samples = config.exposure_samples;

    for (Method m : config.methods) {
      RandomStream rng(RandomStream::derive_seed(config.seed,
                                                 base + 4 + static_cast<std::uint64_t>(m)));
      const auto start = std::chrono::steady_clock::now();
      try {
        const auto estimates = run_method(setup, m, config.budget, checkpoints, rng);
        for (const CheckpointEstimate& cp : estimates) {
          const Metrics metric = metrics(cp.series, true_delta);
          ResultRow row;
          row.pair = pair;
          row.method = m;
          row.queries = cp.queries;
          row.binary_error = metric.binary_error;
          row.absolute_error = metric.absolute_error;
          row.mse = metric.mse;
          row.true_delta = true_delta;
          row.delta_hat = cp.series.mean();
          out.rows.push_back(row);
        }
      } catch (const Error& e) {
        ResultRow row;
        row.pair = pair;
        row.method = m;
        row.true_delta = true_delta;
        row.failed = true;
        row.error = e.what();
        out.rows.push_back(row);
      }
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      out.timings.push_back({pair, m, elapsed.count()});
    }
  };

  if (config.threads <= 1) {
    for (int pair = 0; pair < config.num_pairs; ++pair) run_pair(pair);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    const int count = std::min(config.threads, config.num_pairs);
    workers.reserve(count);
    for (int t = 0; t < count; ++t) {
      workers.emplace_back([&] {
        for (int pair = next.fetch_add(1); pair < config.num_pairs;
             pair = next.fetch_add(1)) {
          run_pair(pair);
        }
      });
    }
    for (std::thread& w : workers) w.join();
  }

  ExperimentResult result;
  for (const PairOutput& out : outputs) {
    result.rows.insert(result.rows.end(), out.rows.begin(), out.rows.end());
    result.timings.insert(result.timings.end(), out.timings.begin(), out.timings.end());
  }
  return result;
}

SummaryTables summarize(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw InvalidInputError("no rows to summarize");
  SummaryTables tables;

  std::map<std::pair<int, std::int64_t>, std::vector<const ResultRow*>> groups;
  std::map<int, std::int64_t> final_checkpoint;
  for (const ResultRow& row : rows) {
    if (row.failed) {
      ++tables.error_cells;
      continue;
    }
    groups[{static_cast<int>(row.method), row.queries}].push_back(&row);
    auto [it, inserted] = final_checkpoint.try_emplace(static_cast<int>(row.method),
                                                       row.queries);
    if (!inserted) it->second = std::max(it->second, row.queries);
  }

  for (const auto& [key, members] : groups) {
    MethodSummary summary;
    summary.method = static_cast<Method>(key.first);
    summary.queries = key.second;
    summary.cells = static_cast<int>(members.size());
    for (const ResultRow* row : members) {
      summary.mean_binary_error += row->binary_error;
      summary.mean_absolute_error += row->absolute_error;
      summary.mean_mse += row->mse;
    }
    summary.mean_binary_error /= summary.cells;
    summary.mean_absolute_error /= summary.cells;
    summary.mean_mse /= summary.cells;
    tables.by_checkpoint.push_back(summary);
  }

  const char* bin_names[3] = {"<0.01", "0.01-0.02", ">=0.02"};
  std::map<std::pair<int, int>, std::pair<int, double>> bins;
  for (const ResultRow& row : rows) {
    if (row.failed || row.queries != final_checkpoint[static_cast<int>(row.method)]) continue;
    const double mag = std::abs(row.true_delta);
    const int bin = mag < 0.01 ? 0 : (mag < 0.02 ? 1 : 2);
    auto& cell = bins[{static_cast<int>(row.method), bin}];
    ++cell.first;
    cell.second += row.binary_error;
  }
  for (const auto& [key, cell] : bins) {
    tables.by_delta_bin.push_back({static_cast<Method>(key.first), bin_names[key.second],
                                   cell.first, cell.second / cell.first});
  }
  return tables;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : line) {
    if (c == sep) {
      parts.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(current);
  return parts;
}

}  // namespace

void write_results_csv(const std::vector<ResultRow>& rows, std::ostream& out) {
  out << "pair,method,queries,binary_error,absolute_error,mse,true_delta,delta_hat\n";
  for (const ResultRow& row : rows) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out << row.pair << ',' << method_name(row.method) << ',' << row.queries << ','
        << format_double(row.failed ? nan : row.binary_error) << ','
        << format_double(row.failed ? nan : row.absolute_error) << ','
        << format_double(row.failed ? nan : row.mse) << ',' << format_double(row.true_delta)
        << ',' << format_double(row.failed ? nan : row.delta_hat) << '\n';
  }
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInputError("empty results file");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> parts = split(line, ',');
    if (parts.size() != 8) throw ParseError(line_no, "expected 8 columns");
    try {
      ResultRow row;
      row.pair = std::stoi(parts[0]);
      row.method = method_from_name(parts[1]);
      row.queries = std::stoll(parts[2]);
      row.binary_error = std::stod(parts[3]);
      row.absolute_error = std::stod(parts[4]);
      row.mse = std::stod(parts[5]);
      row.true_delta = std::stod(parts[6]);
      row.delta_hat = std::stod(parts[7]);
      row.failed = std::isnan(row.binary_error);
      rows.push_back(std::move(row));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return rows;
}

void write_summary_csv(const SummaryTables& tables, std::ostream& out) {
  out << "kind,method,queries,bin,cells,binary_error,absolute_error,mse\n";
  for (const MethodSummary& s : tables.by_checkpoint) {
    out << "metric," << method_name(s.method) << ',' << s.queries << ",," << s.cells << ','
        << format_double(s.mean_binary_error) << ',' << format_double(s.mean_absolute_error)
        << ',' << format_double(s.mean_mse) << '\n';
  }
  for (const DeltaBinSummary& s : tables.by_delta_bin) {
    out << "bin," << method_name(s.method) << ",," << s.bin << ',' << s.cells << ','
        << format_double(s.mean_binary_error) << ",,\n";
  }
  if (tables.error_cells > 0) {
    out << "errors,,,," << tables.error_cells << ",,,\n";
  }
}

void write_timings_csv(const std::vector<CellTiming>& timings, std::ostream& out) {
  out << "pair,method,seconds\n";
  for (const CellTiming& t : timings) {
    out << t.pair << ',' << method_name(t.method) << ',' << format_double(t.seconds) << '\n';
  }
}

void write_curves_svg(const std::vector<ResultRow>& rows, std::ostream& out) {
  const SummaryTables tables = summarize(rows);
  const char* metric_names[3] = {"binary error", "absolute error", "mean squared error"};
  const char* palette[8] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                            "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  std::vector<Method> methods;
  std::vector<std::int64_t> queries;
  for (const MethodSummary& s : tables.by_checkpoint) {
    if (std::find(methods.begin(), methods.end(), s.method) == methods.end()) {
      methods.push_back(s.method);
    }
    if (std::find(queries.begin(), queries.end(), s.queries) == queries.end()) {
      queries.push_back(s.queries);
    }
  }
  std::sort(queries.begin(), queries.end());

  const int panel_w = 300, panel_h = 220, margin = 45, legend_h = 24;
  const int width = 3 * (panel_w + margin) + margin;
  const int height = panel_h + 2 * margin + legend_h;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const double log_lo = std::log10(static_cast<double>(queries.front()));
  const double log_hi = std::log10(static_cast<double>(queries.back()));
  for (int metric = 0; metric < 3; ++metric) {
    const int x0 = margin + metric * (panel_w + margin);
    const int y0 = margin;
    double max_v = 1e-12;
    auto value_of = [&](const MethodSummary& s) {
      return metric == 0 ? s.mean_binary_error
                         : (metric == 1 ? s.mean_absolute_error : s.mean_mse);
    };
    for (const MethodSummary& s : tables.by_checkpoint) max_v = std::max(max_v, value_of(s));

    out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << panel_w
        << "\" height=\"" << panel_h << "\" fill=\"none\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 - 8
        << "\" text-anchor=\"middle\" font-size=\"12\">" << metric_names[metric]
        << "</text>\n";
    out << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 + panel_h + 28
        << "\" text-anchor=\"middle\" font-size=\"10\">queries (log scale)</text>\n";
    out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + 10
        << "\" text-anchor=\"end\" font-size=\"9\">" << format_double(max_v) << "</text>\n";
    out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + panel_h
        << "\" text-anchor=\"end\" font-size=\"9\">0</text>\n";

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      std::string points;
      for (std::int64_t q : queries) {
        for (const MethodSummary& s : tables.by_checkpoint) {
          if (s.method != methods[mi] || s.queries != q) continue;
          const double fx = log_hi > log_lo
                                ? (std::log10(static_cast<double>(q)) - log_lo) /
                                      (log_hi - log_lo)
                                : 0.5;
          const double fy = value_of(s) / max_v;
          points += format_double(x0 + fx * panel_w) + "," +
                    format_double(y0 + panel_h - fy * panel_h) + " ";
        }
      }
      out << "<polyline fill=\"none\" stroke=\"" << palette[mi % 8]
          << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
    }
  }

  // Legend.
  int lx = margin;
  const int ly = margin + panel_h + 40;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    out << "<rect x=\"" << lx << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"4\" fill=\""
        << palette[mi % 8] << "\"/>\n";
    out << "<text x=\"" << lx + 16 << "\" y=\"" << ly - 4 << "\" font-size=\"11\">"
        << method_name(methods[mi]) << "</text>\n";
    lx += 16 + 10 * static_cast<int>(method_name(methods[mi]).size()) + 18;
  }
  out << "</svg>\n";
}

void write_interaction_log(const InteractionLog& log, std::ostream& out) {
  for (const InteractionRecord& rec : log.records) {
    out << rec.query_id << '\t';
    for (int i = 0; i < rec.ranking.length(); ++i) {
      if (i) out << ',';
      out << rec.ranking.docs[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < rec.clicks.size(); ++i) {
      if (i) out << ',';
      out << static_cast<int>(rec.clicks[i]);
    }
    out << '\n';
  }
}

InteractionLog read_interaction_log(std::istream& in) {
  InteractionLog log;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 3) throw ParseError(line_no, "expected qid<TAB>docs<TAB>clicks");
    InteractionRecord rec;
    try {
      rec.query_id = std::stoi(fields[0]);
      for (const std::string& tok : split(fields[1], ',')) {
        rec.ranking.docs.push_back(std::stoi(tok));
      }
      for (const std::string& tok : split(fields[2], ',')) {
        const int c = std::stoi(tok);
        if (c != 0 && c != 1) throw ParseError(line_no, "clicks must be 0 or 1");
        rec.clicks.push_back(static_cast<std::uint8_t>(c));
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (rec.clicks.size() != rec.ranking.docs.size()) {
      throw ParseError(line_no, "click pattern length must match the ranking");
    }
    log.records.push_back(std::move(rec));
  }
  return log;
}

namespace {

std::vector<std::int64_t> parse_int_list(const std::string& value) {
  std::vector<std::int64_t> out;
  for (const std::string& tok : split(value, ',')) {
    if (!tok.empty()) out.push_back(std::stoll(tok));
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_override(ExperimentConfig& config, const std::string& key,
                           const std::string& value) {
  try {
    if (key == "dataset_file") {
      config.dataset_file = value;
    } else if (key == "synthetic_queries") {
      config.synthetic_queries = std::stoi(value);
    } else if (key == "synthetic_docs") {
      config.synthetic_docs = std::stoi(value);
    } else if (key == "synthetic_dim") {
      config.synthetic_dim = std::stoi(value);
    } else if (key == "ranker_train_queries") {
      config.ranker_train_queries = std::stoi(value);
    } else if (key == "feature_fraction") {
      config.feature_fraction = std::stod(value);
    } else if (key == "num_pairs") {
      config.num_pairs = std::stoi(value);
    } else if (key == "methods") {
      config.methods.clear();
      for (const std::string& tok : split(value, ',')) {
        if (!trim(tok).empty()) config.methods.push_back(method_from_name(trim(tok)));
      }
    } else if (key == "budget") {
      config.budget = std::stoll(value);
    } else if (key == "checkpoints") {
      config.checkpoints = parse_int_list(value);
    } else if (key == "seed") {
      config.seed = std::stoull(value);
    } else if (key == "display_length") {
      config.sim.display_length = std::stoi(value);
    } else if (key == "bias_exponent") {
      config.sim.bias_exponent = std::stod(value);
    } else if (key == "zeta_slope") {
      config.sim.zeta_slope = std::stod(value);
    } else if (key == "zeta_intercept") {
      config.sim.zeta_intercept = std::stod(value);
    } else if (key == "steps") {
      config.opt.steps = std::stoi(value);
    } else if (key == "learning_rate") {
      config.opt.learning_rate = std::stod(value);
    } else if (key == "epsilon") {
      config.opt.epsilon = std::stod(value);
    } else if (key == "update_schedule") {
      config.opt.update_schedule = parse_int_list(value);
    } else if (key == "gradient_samples") {
      config.opt.gradient_samples = std::stoi(value);
    } else if (key == "rho_refresh_interval") {
      config.opt.rho_refresh_interval = std::stoi(value);
    } else if (key == "rho_refresh_samples") {
      config.opt.rho_refresh_samples = std::stoi(value);
    } else if (key == "network_hidden") {
      config.opt.network_hidden = std::stoi(value);
    } else if (key == "pi_tau") {
      config.pi.tau = std::stod(value);
    } else if (key == "exposure_samples") {
      config.exposure_samples = std::stoi(value);
    } else if (key == "threads") {
      config.threads = std::stoi(value);
    } else if (key == "svg") {
      config.svg = value == "1" || value == "true" || value == "yes";
    } else {
      throw InvalidInputError("unknown config key '" + key + "'");
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw InvalidInputError("bad value '" + value + "' for config key '" + key + "'");
  }
}

ExperimentConfig parse_experiment_config(std::istream& in,
                                         const std::vector<std::string>& overrides) {
  ExperimentConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    apply_config_override(config, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
  for (const std::string& entry : overrides) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw InvalidInputError("override must look like key=value: " + entry);
    }
    apply_config_override(config, trim(entry.substr(0, eq)), trim(entry.substr(eq + 1)));
  }
  return config;
}

}  // namespace ranklab
