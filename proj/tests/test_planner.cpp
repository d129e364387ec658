#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mopo/planner.hpp"
#include "mopo/random_mdp.hpp"

#include <cmath>

using namespace mopo;

namespace {

double lambda_for(const TabularMdp& mdp) { return mdp.discount() * mdp.r_max() / (1.0 - mdp.discount()); }

}  // namespace

TEST_CASE("penalized reward") {
  Rng rng(1);
  const auto model = random_mdp(3, 2, 0.9, rng);
  const auto u = constant_estimator(3, 2, 1.0);
  CHECK(build_penalized(model, u, 0.0).penalized_reward() == model.reward());
  const auto pen = build_penalized(model, u, 2.0);
  CHECK(pen.penalized_reward() == Mat(model.reward().array() - 2.0));
  CHECK(pen.mdp().transition() == model.transition());
  CHECK_THROWS_AS(build_penalized(model, u, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(build_penalized(model, constant_estimator(2, 2, 1.0), 1.0), std::invalid_argument);
}

TEST_CASE("penalized model under-estimates the true return") {
  Rng rng(2);
  const auto truth = random_mdp(5, 3, 0.9, rng);
  const auto model = perturb_dynamics(truth, 2.0, rng);
  const auto pen = build_penalized(model, oracle_tv(truth, model), lambda_for(truth));
  for (int i = 0; i < 100; ++i) {
    const auto pi = random_policy(5, 3, rng);
    CHECK(expected_return(pen.mdp(), pi) <= expected_return(truth, pi) + 1e-12);
  }
}

TEST_CASE("zero penalty on the true model recovers the optimal policy") {
  Rng rng(3);
  const auto truth = random_mdp(4, 3, 0.9, rng);
  const auto pi_hat = mopo_solve(build_penalized(truth, oracle_tv(truth, truth), lambda_for(truth)), 1e-10);
  CHECK(pi_hat.probs() == optimal_policy(truth, 1e-10).probs());
}

TEST_CASE("large penalty selects the unpenalized actions") {
  Rng rng(4);
  const auto model = random_mdp(4, 3, 0.9, rng);
  Mat u = Mat::Ones(4, 3);
  const std::vector<std::size_t> safe{2, 0, 1, 2};
  for (std::size_t s = 0; s < 4; ++s) u(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(safe[s])) = 0.0;
  const auto pi = mopo_solve(build_penalized(model, tabular_estimator(u), 1e6), 1e-6);
  for (std::size_t s = 0; s < 4; ++s) CHECK(pi.action(s) == safe[s]);
  CHECK_THROWS_AS(mopo_solve(build_penalized(model, tabular_estimator(u), 1.0), 0.0), std::invalid_argument);
}

TEST_CASE("solver dominates enumeration on the penalized model") {
  Rng rng(5);
  const double tol = 1e-10;
  for (int rep = 0; rep < 10; ++rep) {
    const auto truth = random_mdp(4, 2, 0.85, rng);
    const auto model = perturb_dynamics(truth, 2.0, rng);
    const auto pen = build_penalized(model, oracle_tv(truth, model), lambda_for(truth));
    const double best = expected_return(pen.mdp(), mopo_solve(pen, tol));
    const double slackness = tol * (1 + truth.discount()) / (1 - truth.discount());
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(best >= expected_return(pen.mdp(), deterministic_policy_at(i, 4, 2)) - slackness);
    }
  }
}

TEST_CASE("pi delta selection") {
  const std::vector<double> ret{1.0, 3.0, 2.0, 3.0};
  const std::vector<double> eps{0.5, 2.0, 0.1, 0.9};
  CHECK(pi_delta_index(ret, eps, 1e300) == 1);
  CHECK(pi_delta_index(ret, eps, 0.1) == 2);
  CHECK(pi_delta_index(ret, eps, 1.0) == 3);
  CHECK_THROWS_AS(pi_delta_index(ret, eps, 0.05), std::invalid_argument);
}

TEST_CASE("pi delta return is nondecreasing in delta") {
  Rng rng(6);
  const auto truth = random_mdp(3, 3, 0.9, rng);
  const auto model = perturb_dynamics(truth, 1.5, rng);
  const auto u = oracle_tv(truth, model);
  std::vector<TabularPolicy> candidates;
  for (std::size_t i = 0; i < 27; ++i) candidates.push_back(deterministic_policy_at(i, 3, 3));
  std::vector<double> eps;
  for (const auto& pi : candidates) eps.push_back(epsilon_u(model, pi, u));
  const double lo = *std::min_element(eps.begin(), eps.end());
  const double hi = *std::max_element(eps.begin(), eps.end());
  double prev = -1e300;
  for (double delta : delta_grid(lo, hi)) {
    const double r = expected_return(truth, pi_delta(truth, candidates, u, model, delta));
    CHECK(r >= prev);
    prev = r;
  }
  CHECK(expected_return(truth, pi_delta(truth, candidates, u, model, 1e300)) ==
        doctest::Approx(expected_return(truth, optimal_policy(truth, 1e-12))).epsilon(1e-9));
}

TEST_CASE("delta grid") {
  const auto g = delta_grid(0.2, 5.0);
  CHECK(g.size() == 32);
  CHECK(g.front() == 0.2);
  CHECK(g.back() == 5.0);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] >= g[i - 1]);
  const auto z = delta_grid(0.0, 1.0);
  CHECK(z.front() == 0.0);
  CHECK(z[1] == doctest::Approx(1e-6));
}

TEST_CASE("certificate on a perfect model") {
  Rng rng(7);
  const auto truth = random_mdp(3, 2, 0.9, rng);
  const auto cert = theorem_certificate(truth, truth, oracle_tv(truth, truth), lambda_for(truth));
  CHECK(cert.pi_hat_true_return == cert.optimal_true_return);
  for (const auto& pc : cert.per_policy) {
    CHECK(pc.eps_u == 0.0);
    CHECK(pc.supremum_slack == doctest::Approx(cert.optimal_true_return - pc.true_return));
    CHECK(pc.supremum_slack >= 0.0);
  }
}

TEST_CASE("certificate on random instances") {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto truth = random_mdp(3, 2, 0.9, rng);
    const auto model = perturb_dynamics(truth, 2.0, rng);
    const auto cert = theorem_certificate(truth, model, oracle_tv(truth, model), lambda_for(truth));
    CHECK(cert.per_policy.size() == 8);
    CHECK(cert.supremum_min_slack >= -1e-8);
    CHECK(cert.delta_grid_min_slack >= -1e-8);
    CHECK(cert.behavior_corollary_slack >= -1e-8);
    CHECK(cert.two_sided_min_slack >= -1e-9);
    CHECK(cert.conservatism_min_slack >= -1e-9);
    CHECK(cert.deltas.size() == 32);
    const auto inflated = theorem_certificate(truth, model, oracle_tv(truth, model), 10 * lambda_for(truth));
    CHECK(inflated.supremum_min_slack >= -1e-8);
  }
}

TEST_CASE("certificate preconditions and report") {
  Rng rng(9);
  const auto truth = random_mdp(3, 2, 0.9, rng);
  const auto model = perturb_dynamics(truth, 2.0, rng);
  const auto u = oracle_tv(truth, model);
  CHECK_THROWS_AS(theorem_certificate(truth, model, u, 0.5 * lambda_for(truth)), std::invalid_argument);
  const auto big = random_mdp(20, 4, 0.9, rng);
  CHECK_THROWS_AS(theorem_certificate(big, big, oracle_tv(big, big), lambda_for(big)), std::length_error);
  const auto j = to_json(theorem_certificate(truth, model, u, lambda_for(truth)));
  for (const char* key : {"lambda", "c", "delta_min", "supremum_min_slack", "delta_grid_min_slack", "behavior_corollary_slack",
                          "per_policy"}) {
    CHECK(j.contains(key));
  }
  CHECK(j.at("per_policy").size() == 8);
  CHECK(j.at("c").get<double>() == doctest::Approx(10.0));
}
