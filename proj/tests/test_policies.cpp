#include "ranklab/policies.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <sstream>

#include "doctest.h"

using namespace ranklab;

namespace {

Query make_query(int docs, int dim, RandomStream& rng) {
  Query q;
  q.id = 0;
  for (int d = 0; d < docs; ++d) {
    std::vector<double> x(dim);
    for (double& v : x) v = rng.normal();
    q.features.push_back(std::move(x));
    q.labels.push_back(0);
  }
  return q;
}

// Chi-square critical value via the Wilson-Hilferty approximation at
// p = 0.001 (z = 3.0902).
double chi2_crit(int df) {
  const double z = 3.090232;
  const double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
  return df * t * t * t;
}

}  // namespace

TEST_CASE("deterministic placement is a point mass in ranking order") {
  RandomStream rng(1);
  const Query q = make_query(3, 2, rng);
  const FixedRankingPolicy policy({2, 0, 1});

  CHECK(policy.placement_prob(q, {}, 2) == 1.0);
  CHECK(policy.placement_prob(q, {}, 0) == 0.0);
  const DocId prefix[] = {2};
  CHECK(policy.placement_prob(q, prefix, 0) == 1.0);
  CHECK_THROWS_AS(policy.placement_prob(q, prefix, 2), InvalidInputError);

  RandomStream sample_rng(2);
  CHECK(policy.sample_ranking(q, 3, sample_rng).docs == std::vector<DocId>{2, 0, 1});
  CHECK(policy.ranking_prob(q, Ranking{{2, 0, 1}}) == 1.0);
  CHECK(policy.ranking_prob(q, Ranking{{0, 2, 1}}) == 0.0);
}

TEST_CASE("uniform policy placement and ranking probabilities") {
  RandomStream rng(1);
  const Query q = make_query(3, 2, rng);
  const UniformRankingPolicy uniform;
  CHECK(uniform.placement_prob(q, {}, 1) == doctest::Approx(1.0 / 3));
  CHECK(uniform.ranking_prob(q, Ranking{{1, 0, 2}}) == doctest::Approx(1.0 / 6));
}

TEST_CASE("softmax policy with equal scores is uniform") {
  Query q;
  q.id = 0;
  for (int d = 0; d < 4; ++d) {
    q.features.push_back({1.0, 1.0});
    q.labels.push_back(0);
  }
  const ScoreNetworkPolicy net(2, 8, 99);
  CHECK(net.placement_prob(q, {}, 0) == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("ranking probabilities sum to one over all full rankings") {
  RandomStream rng(5);
  const Query q = make_query(4, 3, rng);
  const ScoreNetworkPolicy net(3, 16, 123);
  double total = 0.0;
  for_each_ranking(net, q, 4, [&](double prob, const Ranking&) { total += prob; });
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

  const auto base = std::make_shared<ScoreNetworkPolicy>(3, 16, 124);
  const MixturePolicy mixture(base, 0.25);
  total = 0.0;
  for_each_ranking(mixture, q, 4, [&](double prob, const Ranking&) { total += prob; });
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("mixture policy keeps the placement floor") {
  RandomStream rng(6);
  const Query q = make_query(5, 3, rng);
  const auto base = std::make_shared<ScoreNetworkPolicy>(3, 16, 5);
  const double epsilon = 0.1;
  const MixturePolicy mixture(base, epsilon);

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DocId> prefix;
    std::vector<DocId> pool = {0, 1, 2, 3, 4};
    const int prefix_len = rng.uniform_int(4);
    for (int i = 0; i < prefix_len; ++i) {
      const int pick = rng.uniform_int(static_cast<int>(pool.size()));
      prefix.push_back(pool[pick]);
      pool.erase(pool.begin() + pick);
    }
    for (DocId d : pool) {
      CHECK(mixture.placement_prob(q, prefix, d) >=
            epsilon / static_cast<double>(pool.size()) - 1e-12);
    }
  }
}

TEST_CASE("mixture of a deterministic ranker: two-doc example") {
  RandomStream rng(7);
  const Query q = make_query(2, 2, rng);
  const auto det = std::make_shared<FixedRankingPolicy>(std::vector<DocId>{0, 1});
  const MixturePolicy mixture(det, 0.3);
  CHECK(mixture.ranking_prob(q, Ranking{{0, 1}}) == doctest::Approx(0.85).epsilon(1e-12));
}

TEST_CASE("sampling distribution matches ranking_prob (chi-square)") {
  RandomStream rng(8);
  const Query q = make_query(3, 2, rng);
  const ScoreNetworkPolicy net(2, 8, 17);

  std::vector<Ranking> rankings;
  std::vector<double> probs;
  for_each_ranking(net, q, 3, [&](double prob, const Ranking& r) {
    rankings.push_back(r);
    probs.push_back(prob);
  });

  const int samples = 60000;
  std::vector<int> counts(rankings.size(), 0);
  RandomStream sample_rng(9);
  for (int s = 0; s < samples; ++s) {
    const Ranking r = net.sample_ranking(q, 3, sample_rng);
    for (std::size_t i = 0; i < rankings.size(); ++i) {
      if (rankings[i].docs == r.docs) {
        ++counts[i];
        break;
      }
    }
  }
  double chi2 = 0.0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    const double expected = samples * probs[i];
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  CHECK(chi2 < chi2_crit(static_cast<int>(rankings.size()) - 1));
}

TEST_CASE("uniform sampling matches the multinomial CI example") {
  RandomStream rng(10);
  const Query q = make_query(3, 2, rng);
  const UniformRankingPolicy uniform;
  const int samples = 100000;
  std::map<std::vector<DocId>, int> counts;
  for (int s = 0; s < samples; ++s) {
    ++counts[uniform.sample_ranking(q, 3, rng).docs];
  }
  CHECK(counts.size() == 6);
  for (const auto& [docs, count] : counts) {
    CHECK(std::abs(count / static_cast<double>(samples) - 1.0 / 6) < 0.01);
  }
}

TEST_CASE("same seed reproduces the same sample") {
  RandomStream rng(11);
  const Query q = make_query(4, 3, rng);
  const ScoreNetworkPolicy net(3, 16, 21);
  RandomStream a(42), b(42);
  CHECK(net.sample_ranking(q, 4, a).docs == net.sample_ranking(q, 4, b).docs);
}

TEST_CASE("placement log-prob gradient") {
  RandomStream rng(12);
  const Query q = make_query(3, 4, rng);
  ScoreNetworkPolicy net(4, 8, 33);

  SUBCASE("single unplaced doc has zero gradient") {
    const DocId prefix[] = {0, 1};
    const std::vector<double> grad = placement_logprob_grad(net, q, prefix, 2);
    for (double g : grad) CHECK(g == doctest::Approx(0.0).epsilon(1e-14));
  }

  SUBCASE("identical features give identical, finite gradients by symmetry") {
    Query twin = q;
    twin.features[1] = twin.features[0];
    const std::vector<double> g0 = placement_logprob_grad(net, twin, {}, 0);
    const std::vector<double> g1 = placement_logprob_grad(net, twin, {}, 1);
    for (std::size_t i = 0; i < g0.size(); ++i) {
      CHECK(std::isfinite(g0[i]));
      CHECK(g0[i] == doctest::Approx(g1[i]).epsilon(1e-12));
    }
  }

  SUBCASE("matches central finite differences") {
    const DocId prefix[] = {1};
    const DocId doc = 2;
    const std::vector<double> grad = placement_logprob_grad(net, q, prefix, doc);
    std::vector<double> params(net.parameters().begin(), net.parameters().end());
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      std::vector<double> perturbed = params;
      perturbed[p] = params[p] + h;
      net.set_parameters(perturbed);
      const double up = std::log(net.placement_prob(q, prefix, doc));
      perturbed[p] = params[p] - h;
      net.set_parameters(perturbed);
      const double down = std::log(net.placement_prob(q, prefix, doc));
      net.set_parameters(params);
      const double fd = (up - down) / (2.0 * h);
      const double denom = std::max(std::abs(fd), 1e-3);
      worst = std::max(worst, std::abs(grad[p] - fd) / denom);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("checkpoint round-trip preserves the policy") {
  ScoreNetworkPolicy net(5, 8, 77);
  std::stringstream buffer;
  save_network(net, buffer);
  const ScoreNetworkPolicy loaded = load_network(buffer);
  REQUIRE(loaded.parameter_count() == net.parameter_count());
  for (int i = 0; i < net.parameter_count(); ++i) {
    CHECK(loaded.parameters()[i] == net.parameters()[i]);
  }

  std::stringstream bad("ranklab-checkpoint 2\n");
  CHECK_THROWS_AS(load_network(bad), InvalidInputError);
}

TEST_CASE("ranking mixture policy behaves like the A/B logging policy") {
  RandomStream rng(13);
  const Query q = make_query(3, 2, rng);
  std::vector<std::shared_ptr<const Policy>> components = {
      std::make_shared<FixedRankingPolicy>(std::vector<DocId>{0, 1, 2}),
      std::make_shared<FixedRankingPolicy>(std::vector<DocId>{1, 2, 0})};
  const RankingMixturePolicy mixture(components, {0.5, 0.5});

  CHECK(mixture.ranking_prob(q, Ranking{{0, 1, 2}}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mixture.ranking_prob(q, Ranking{{1, 2, 0}}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mixture.ranking_prob(q, Ranking{{2, 0, 1}}) == 0.0);
  // Once the prefix identifies the component, placement is deterministic.
  const DocId prefix[] = {0};
  CHECK(mixture.placement_prob(q, prefix, 1) == doctest::Approx(1.0).epsilon(1e-12));
}
