#include "ranklab/logopt.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "ranklab/click_sim.hpp"
#include "ranklab/oracles.hpp"

using namespace ranklab;

namespace {

// pi1=[A,B], pi2=[B,A], theta=(1,0.5), zeta=(A:1, B:0); delta = 0.5.
// Logging with [A,B] always gives x = delta exactly, so variance 0.
SmallInstance two_doc_instance() {
  SmallInstance inst;
  inst.query.id = 0;
  inst.query.features = {{1.0, 0.0}, {0.0, 1.0}};
  inst.query.labels = {0, 0};
  inst.theta = {1.0, 0.5};
  inst.zeta = {1.0, 0.0};
  inst.ranking1.docs = {0, 1};
  inst.ranking2.docs = {1, 0};
  return inst;
}

VarianceContext make_context(const SmallInstance& inst, const Policy& logging,
                             double delta_hat) {
  VarianceContext ctx;
  ctx.delta_hat = delta_hat;
  ctx.theta_hat = inst.theta;
  ctx.zeta_hat = inst.zeta;
  const std::vector<double> rho = exposure_under_exact(logging, inst.query, inst.theta);
  const std::vector<double> e1 =
      exposure_under_exact(inst.policy1(), inst.query, inst.theta);
  const std::vector<double> e2 =
      exposure_under_exact(inst.policy2(), inst.query, inst.theta);
  ctx.exposure.docs.resize(inst.num_docs());
  for (DocId d = 0; d < inst.num_docs(); ++d) {
    ctx.exposure.docs[d].rho = rho[d];
    ctx.exposure.docs[d].lambda = e1[d] - e2[d];
  }
  return ctx;
}

SmallInstance random_instance(int docs, int dim, RandomStream& rng) {
  SmallInstance inst;
  inst.query.id = 0;
  std::vector<DocId> order1, order2;
  for (DocId d = 0; d < docs; ++d) {
    std::vector<double> x(dim);
    for (double& v : x) v = rng.normal();
    inst.query.features.push_back(std::move(x));
    inst.query.labels.push_back(0);
    inst.zeta.push_back(0.05 + 0.9 * rng.uniform01());
    order1.push_back(d);
    order2.push_back(d);
  }
  inst.theta.resize(docs);
  for (int r = 0; r < docs; ++r) inst.theta[r] = 0.05 + 0.9 * rng.uniform01();
  std::sort(inst.theta.rbegin(), inst.theta.rend());
  for (int i = docs - 1; i > 0; --i) std::swap(order1[i], order1[rng.uniform_int(i + 1)]);
  for (int i = docs - 1; i > 0; --i) std::swap(order2[i], order2[rng.uniform_int(i + 1)]);
  inst.ranking1.docs = order1;
  inst.ranking2.docs = order2;
  return inst;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Central finite differences of exact_variance over the network parameters
// of an epsilon-mixture logging policy.
std::vector<double> fd_variance_gradient(ScoreNetworkPolicy& net, double epsilon,
                                         const VarianceContext& ctx, const Query& query,
                                         double step) {
  const auto mixture_of = [&](const ScoreNetworkPolicy& n) {
    return MixturePolicy(std::make_shared<ScoreNetworkPolicy>(n), epsilon);
  };
  std::vector<double> params(net.parameters().begin(), net.parameters().end());
  std::vector<double> grad(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::vector<double> perturbed = params;
    perturbed[p] = params[p] + step;
    net.set_parameters(perturbed);
    const double up = exact_variance(mixture_of(net), ctx, query);
    perturbed[p] = params[p] - step;
    net.set_parameters(perturbed);
    const double down = exact_variance(mixture_of(net), ctx, query);
    grad[p] = (up - down) / (2.0 * step);
  }
  net.set_parameters(params);
  return grad;
}

}  // namespace

TEST_CASE("exact_variance on the two-doc fixture") {
  const SmallInstance inst = two_doc_instance();

  SUBCASE("deterministic [A,B] logging has zero variance") {
    const FixedRankingPolicy logging({0, 1});
    const VarianceContext ctx = make_context(inst, logging, 0.5);
    CHECK(exact_variance(logging, ctx, inst.query) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("uniform logging has variance 1/12") {
    const UniformRankingPolicy logging;
    const VarianceContext ctx = make_context(inst, logging, 0.5);
    CHECK(ctx.exposure.at(0).rho == doctest::Approx(0.75));
    CHECK(exact_variance(logging, ctx, inst.query) ==
          doctest::Approx(1.0 / 12).epsilon(1e-9));
  }

  SUBCASE("identical comparison policies give zero variance") {
    SmallInstance same = inst;
    same.ranking2 = same.ranking1;
    const UniformRankingPolicy logging;
    VarianceContext ctx = make_context(same, logging, 0.0);
    CHECK(exact_variance(logging, ctx, same.query) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("variance is E[x^2] - E[x]^2 when delta_hat is the enumerated mean") {
    RandomStream rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      const SmallInstance random = random_instance(3, 2, rng);
      const UniformRankingPolicy logging;
      // First pass with delta_hat = 0 gives E[x^2]; the enumerated mean is
      // the IPS expectation, which equals delta for supported logging.
      VarianceContext ctx = make_context(random, logging, 0.0);
      const double second_moment = exact_variance(logging, ctx, random.query);
      const double mean = random.true_delta();
      ctx.delta_hat = mean;
      const double variance = exact_variance(logging, ctx, random.query);
      CHECK(std::abs(variance - (second_moment - mean * mean)) < 1e-9);
    }
  }

  SUBCASE("support violation is reported") {
    // Logging never shows doc 0 in its single displayed position.
    SmallInstance top1 = inst;
    top1.theta = {1.0};
    const FixedRankingPolicy logging({1, 0});
    VarianceContext ctx = make_context(top1, logging, 0.5);
    CHECK_THROWS_AS(exact_variance(logging, ctx, top1.query), SupportViolationError);
  }
}

TEST_CASE("approx_variance_gradient vanishes at the zero-variance optimum") {
  const SmallInstance inst = two_doc_instance();

  auto exact_ctx_for = [&](const ScoreNetworkPolicy& n) {
    const MixturePolicy mix(std::make_shared<ScoreNetworkPolicy>(n), 0.0);
    return make_context(inst, mix, 0.5);
  };

  // Baseline: gradient magnitude at a freshly initialized network.
  ScoreNetworkPolicy fresh(2, 8, 3);
  VarianceContext base_ctx = exact_ctx_for(fresh);
  base_ctx.gradient_samples = 10000;
  RandomStream base_rng(5);
  const GradientEstimate base =
      approx_variance_gradient(fresh, 0.0, base_ctx, inst.query, base_rng);

  // Train toward the point mass on [A, B], refreshing rho exactly against
  // the current policy at every step.
  ScoreNetworkPolicy net(2, 8, 3);
  RandomStream train_rng(6);
  for (int step = 0; step < 600; ++step) {
    VarianceContext ctx = exact_ctx_for(net);
    ctx.gradient_samples = 64;
    const GradientEstimate ge = approx_variance_gradient(net, 0.0, ctx, inst.query, train_rng);
    net.apply_gradient_step(ge.grad, 0.1);
  }

  VarianceContext opt_ctx = exact_ctx_for(net);
  opt_ctx.gradient_samples = 10000;
  RandomStream rng(7);
  const GradientEstimate at_opt = approx_variance_gradient(net, 0.0, opt_ctx, inst.query, rng);
  const MixturePolicy trained(std::make_shared<ScoreNetworkPolicy>(net), 0.0);
  CHECK(exact_variance(trained, opt_ctx, inst.query) < 0.02);
  CHECK(norm(at_opt.grad) < 1e-2 * norm(base.grad));
}

TEST_CASE("gradient fidelity against finite differences") {
  RandomStream rng(31);
  const SmallInstance inst = random_instance(3, 3, rng);
  ScoreNetworkPolicy net(3, 8, 41);
  const double epsilon = 0.1;

  const MixturePolicy mixture(std::make_shared<ScoreNetworkPolicy>(net), epsilon);
  VarianceContext ctx = make_context(inst, mixture, inst.true_delta());
  ctx.gradient_samples = 10000;

  RandomStream grad_rng(43);
  const GradientEstimate mc = approx_variance_gradient(net, epsilon, ctx, inst.query, grad_rng);
  const std::vector<double> fd = fd_variance_gradient(net, epsilon, ctx, inst.query, 1e-4);

  CHECK(cosine(mc.grad, fd) > 0.99);
  CHECK(std::abs(norm(mc.grad) - norm(fd)) / norm(fd) < 0.05);

  SUBCASE("two independent seeds agree within 10% relative norm") {
    RandomStream other_rng(44);
    const GradientEstimate again =
        approx_variance_gradient(net, epsilon, ctx, inst.query, other_rng);
    std::vector<double> diff(mc.grad.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = mc.grad[i] - again.grad[i];
    CHECK(norm(diff) / norm(fd) < 0.10);
  }
}

TEST_CASE("a small exact-gradient step does not increase the variance") {
  RandomStream rng(51);
  for (double lr : {1e-3, 1e-4}) {
    const SmallInstance inst = random_instance(3, 3, rng);
    ScoreNetworkPolicy net(3, 8, 53);
    const double epsilon = 0.1;
    const MixturePolicy mixture(std::make_shared<ScoreNetworkPolicy>(net), epsilon);
    VarianceContext ctx = make_context(inst, mixture, inst.true_delta());

    const double before = exact_variance(mixture, ctx, inst.query);
    const std::vector<double> fd = fd_variance_gradient(net, epsilon, ctx, inst.query, 1e-4);
    net.apply_gradient_step(fd, lr);
    const MixturePolicy stepped(std::make_shared<ScoreNetworkPolicy>(net), epsilon);
    const double after = exact_variance(stepped, ctx, inst.query);
    CHECK(after <= before + 1e-9);
  }
}

TEST_CASE("train_logging_policy halves the two-doc variance") {
  const SmallInstance inst = two_doc_instance();
  const UniformRankingPolicy uniform;
  VarianceContext ctx = make_context(inst, uniform, 0.5);
  const double uniform_variance = exact_variance(uniform, ctx, inst.query);

  OptimizerConfig config;
  config.steps = 2000;
  RandomStream rng(61);
  const QueryDistribution dist = inst.distribution();
  const LogOptResult result = train_logging_policy(
      dist.queries, dist.weights, {ctx}, config, rng);

  VarianceContext fresh = make_context(inst, *result.policy, 0.5);
  const double trained_variance = exact_variance(*result.policy, fresh, inst.query);
  CHECK(trained_variance <= 0.5 * uniform_variance);
  CHECK(result.trace.size() == 2000);

  SUBCASE("the returned mixture satisfies the support requirement") {
    const SupportReport report = check_support(*result.policy, inst.policy1(),
                                               inst.policy2(), inst.distribution(),
                                               inst.click_model());
    CHECK(report.ok());
  }
}

TEST_CASE("optimizer is a no-op in objective when the policies agree") {
  SmallInstance inst = two_doc_instance();
  inst.ranking2 = inst.ranking1;
  const UniformRankingPolicy uniform;
  VarianceContext ctx = make_context(inst, uniform, 0.0);

  OptimizerConfig config;
  config.steps = 50;
  RandomStream rng(62);
  const QueryDistribution dist = inst.distribution();
  const LogOptResult result =
      train_logging_policy(dist.queries, dist.weights, {ctx}, config, rng);
  VarianceContext fresh = make_context(inst, *result.policy, 0.0);
  CHECK(exact_variance(*result.policy, fresh, inst.query) ==
        doctest::Approx(0.0).epsilon(1e-12));
  for (const TraceRow& row : result.trace) CHECK(row.estimated_variance == 0.0);
}

TEST_CASE("optimize_logging_policy is deterministic given seed and log") {
  const SmallInstance inst = two_doc_instance();
  const ClickModel model = inst.click_model();
  const UniformRankingPolicy uniform;

  InteractionLog log;
  RandomStream sim_rng(63);
  for (int i = 0; i < 400; ++i) {
    InteractionRecord rec;
    rec.query_id = inst.query.id;
    rec.ranking = uniform.sample_ranking(inst.query, 2, sim_rng);
    rec.clicks = sample_clicks(rec.ranking, inst.query, model, sim_rng);
    log.records.push_back(std::move(rec));
  }
  Dataset dataset;
  dataset.queries = {inst.query};
  dataset.feature_dim = 2;

  OptimizerConfig config;
  config.steps = 100;
  RandomStream a(64), b(64);
  const LogOptOutput out_a =
      optimize_logging_policy(log, dataset, inst.policy1(), inst.policy2(), config, a);
  const LogOptOutput out_b =
      optimize_logging_policy(log, dataset, inst.policy1(), inst.policy2(), config, b);
  CHECK(out_a.delta_hat == out_b.delta_hat);
  const auto pa = out_a.training.network->parameters();
  const auto pb = out_b.training.network->parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}
