#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mopo/harness.hpp"
#include "mopo/random_mdp.hpp"

#include <cmath>

using namespace mopo;

TEST_CASE("hybrid reconstruction matches a direct rollout sum") {
  Rng rng(11);
  const auto truth = random_mdp(4, 2, 0.8, rng);
  const auto model = perturb_dynamics(truth, 3.0, rng);
  const auto pi = random_policy(4, 2, rng);
  const double recon = hybrid_reconstruction(truth, model, pi, reconstruction_horizon(0.8, truth.r_max()));
  // The sum telescopes to W_H - W_0, which tends to eta_model - eta_true.
  CHECK(std::abs(recon - (expected_return(model, pi) - expected_return(truth, pi))) <= 1e-8);
  CHECK(hybrid_reconstruction(truth, truth, pi, 300) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("reconstruction horizon") {
  CHECK(reconstruction_horizon(0.5, 1.0) == 200);
  const int h = reconstruction_horizon(0.99, 1.0);
  CHECK(std::pow(0.99, h) * 200.0 <= 1e-9);
  CHECK(std::pow(0.99, h - 1) * 200.0 > 1e-9);
}

TEST_CASE("lemma instances are reproducible from their seed") {
  const SizeCaps caps;
  const auto a = lemma_instance(77, caps, false, false);
  const auto b = lemma_instance(77, caps, false, false);
  CHECK(a.model.transition() == b.model.transition());
  CHECK(a.policy.probs() == b.policy.probs());
  CHECK(lemma_instance(77, caps, true, true).truth.discount() == 0.99);
}

TEST_CASE("lemma suite passes and reports every check") {
  const auto report = run_lemma_suite(40, SizeCaps{}, 5);
  CHECK(report.passed());
  CHECK(report.check("telescoping-identity").n_evaluated == 40);
  CHECK(report.check("hybrid-reconstruction").worst_slack >= -1e-6);
  CHECK(report.check("identical-model-zero").n_evaluated == 4);
  CHECK(report.check("identical-model-zero").worst_slack == 0.0);
  CHECK_THROWS_AS(report.check("missing"), std::out_of_range);
}

TEST_CASE("bound suite passes") {
  const auto report = run_bound_suite(15, 6);
  for (const auto& c : report.checks) {
    INFO(c.name << " " << c.worst_slack << " " << c.location);
    CHECK(c.passed);
    CHECK(c.n_evaluated == 15 * 8);
  }
  CHECK(report.checks.size() == 8);
}

TEST_CASE("bound suite flags an undersized penalty") {
  BoundSuiteOptions opts;
  opts.lambda_scale = 0.01;
  const auto report = run_bound_suite(15, 6, opts);
  const auto& c = report.check("two-sided-inflated-lambda");
  CHECK_FALSE(c.passed);
  CHECK(c.n_failed > 0);
  CHECK(c.location.find("instance seed") != std::string::npos);
  CHECK_FALSE(report.passed());
}

TEST_CASE("adversarial fixture") {
  const auto f = adversarial_fixture();
  const auto u = oracle_tv(f.truth, f.model);
  CHECK(u(0, 1) == doctest::Approx(1.0));
  CHECK(u(0, 0) == 0.0);
  const auto greedy = optimal_policy(f.model, 1e-12);
  CHECK(greedy.action(0) == 1);
  const auto pi_hat = mopo_solve(build_penalized(f.model, u, 9.0), 1e-12);
  CHECK(pi_hat.action(0) == 0);
  CHECK(expected_return(f.truth, pi_hat) == doctest::Approx(0.9 * 0.5 / 0.1));
  CHECK(expected_return(f.truth, greedy) == doctest::Approx(-9.0));
}

TEST_CASE("theorem suite passes and is deterministic") {
  const auto a = run_theorem_suite(20, 9);
  CHECK(a.passed());
  CHECK(a.check("supremum-bound").n_evaluated == 20);
  CHECK(a.check("perfect-model-optimal").n_evaluated == 2);
  CHECK(a.check("adversarial-fixture").worst_slack > 0.0);
  const auto b = run_theorem_suite(20, 9);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(to_text(a).find("suite theorem: PASS") == 0);
}
