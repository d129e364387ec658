#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mopo/mdp.hpp"
#include "mopo/random_mdp.hpp"

#include <cmath>

using namespace mopo;

namespace {

TabularMdp single_state(double r, double gamma) {
  return TabularMdp(1, 1, Mat::Ones(1, 1), Mat::Constant(1, 1, r), Vec::Ones(1), gamma);
}

// Plain fixed-point iteration, independent of the LU path.
Vec iterate_policy_evaluation(const TabularMdp& mdp, const TabularPolicy& pi) {
  const auto S = static_cast<Eigen::Index>(mdp.n_states());
  const auto A = static_cast<Eigen::Index>(mdp.n_actions());
  Vec v = Vec::Zero(S);
  for (int it = 0; it < 100000; ++it) {
    Vec next = Vec::Zero(S);
    for (Eigen::Index s = 0; s < S; ++s)
      for (Eigen::Index a = 0; a < A; ++a) {
        double cont = 0.0;
        for (Eigen::Index t = 0; t < S; ++t) cont += mdp.transition()(s * A + a, t) * v(t);
        next(s) += pi.probs()(s, a) * (mdp.reward()(s, a) + mdp.discount() * cont);
      }
    const double resid = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (resid <= 1e-12) break;
  }
  return v;
}

// Return of pi under a hybrid process: the first j steps follow `first`,
// the remainder follows `second`; returns sum_{t<j} gamma^t d_t r + gamma^j d_j V_second.
double hybrid_return(const TabularMdp& first, const TabularMdp& second, const TabularPolicy& pi, int j) {
  const Mat p_first = policy_transition(first, pi);
  const Vec r_pi = policy_reward(first, pi);
  const Vec v_second = value_function(second, pi);
  Vec d = first.initial_dist();
  double total = 0.0;
  double disc = 1.0;
  for (int t = 0; t < j; ++t) {
    total += disc * d.dot(r_pi);
    d = p_first.transpose() * d;
    disc *= first.discount();
  }
  return total + disc * d.dot(v_second);
}

}  // namespace

TEST_CASE("zero reward gives zero value") {
  Rng rng(3);
  const auto base = random_mdp(4, 3, 0.9, rng);
  const auto mdp = base.with_reward(Mat::Zero(4, 3));
  const auto pi = random_policy(4, 3, rng);
  CHECK(value_function(mdp, pi).cwiseAbs().maxCoeff() == 0.0);
  CHECK(expected_return(mdp, pi) == 0.0);
}

TEST_CASE("single state geometric series") {
  const auto mdp = single_state(1.0, 0.9);
  const auto pi = TabularPolicy::uniform(1, 1);
  CHECK(value_function(mdp, pi)(0) == doctest::Approx(10.0).epsilon(1e-12));
  const auto occ = occupancy_measure(mdp, pi);
  CHECK(occ.rho(0, 0) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("value function matches iterative evaluation") {
  Rng rng(11);
  const auto mdp = random_mdp(3, 2, 0.8, rng);
  const auto pi = random_policy(3, 2, rng);
  const Vec exact = value_function(mdp, pi);
  const Vec iter = iterate_policy_evaluation(mdp, pi);
  CHECK((exact - iter).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(exact.cwiseAbs().maxCoeff() <= mdp.r_max() / (1.0 - mdp.discount()));
}

TEST_CASE("two-state chain with unit reward") {
  Mat t(4, 2);
  t << 0, 1, 0, 1, 1, 0, 1, 0;
  Vec mu(2);
  mu << 1, 0;
  const TabularMdp mdp(2, 2, t, Mat::Ones(2, 2), mu, 0.5);
  CHECK(expected_return(mdp, TabularPolicy::deterministic({0, 1}, 2)) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("return equals occupancy-weighted reward and mass is 1/(1-gamma)") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const double gamma = 0.5 + 0.49 * std::uniform_real_distribution<double>(0, 1)(rng);
    const auto mdp = random_mdp(5, 3, gamma, rng);
    const auto pi = random_policy(5, 3, rng);
    const auto occ = occupancy_measure(mdp, pi);
    CHECK(std::abs(occ.expect(mdp.reward()) - expected_return(mdp, pi)) <= 1e-9);
    CHECK(std::abs(occ.mass() - 1.0 / (1.0 - gamma)) <= 1e-9);
    CHECK(occ.rho.minCoeff() >= 0.0);
  }
}

TEST_CASE("symmetric two-state occupancy") {
  Mat t(4, 2);
  t << 0.7, 0.3, 0.2, 0.8, 0.3, 0.7, 0.8, 0.2;
  Mat r(2, 2);
  r << 1, 0, 1, 0;
  const TabularMdp mdp(2, 2, t, r, Vec::Constant(2, 0.5), 0.9);
  const auto occ = occupancy_measure(mdp, TabularPolicy::uniform(2, 2));
  CHECK(occ.rho(0, 0) == doctest::Approx(occ.rho(1, 0)).epsilon(1e-12));
  CHECK(occ.rho(0, 1) == doctest::Approx(occ.rho(1, 1)).epsilon(1e-12));
}

TEST_CASE("model gap on point masses") {
  Mat t = Mat::Zero(3, 3);
  t(0, 0) = 1;
  t(1, 1) = 1;
  t(2, 2) = 1;
  Vec r(3);
  r << 0, 1, -0.5;
  const TabularMdp truth(3, 1, t, Mat(r), Vec::Constant(3, 1.0 / 3), 0.9);
  Mat tm = t;
  tm.row(0) << 0, 1, 0;
  const auto model = truth.with_transition(tm);
  const auto pi = TabularPolicy::uniform(3, 1);
  const Vec v = value_function(truth, pi);
  CHECK(model_gap(truth, model, pi, 0, 0) == doctest::Approx(v(1) - v(0)).epsilon(1e-14));
  CHECK(model_gap(truth, truth, pi, 1, 0) == 0.0);
}

TEST_CASE("model gap rejects mismatched reward") {
  Rng rng(1);
  const auto a = random_mdp(3, 2, 0.9, rng);
  const auto b = a.with_reward(Mat::Zero(3, 2));
  CHECK_THROWS_AS(model_gap(a, b, TabularPolicy::uniform(3, 2), 0, 0), std::invalid_argument);
}

TEST_CASE("model gap bounded by scaled total variation") {
  Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    const auto truth = random_mdp(5, 3, 0.9, rng);
    const auto model = perturb_dynamics(truth, 3.0, rng);
    const auto pi = random_policy(5, 3, rng);
    const Mat g = model_gap_table(truth, model, pi);
    const double c = truth.r_max() / (1.0 - truth.discount());
    for (std::size_t s = 0; s < 5; ++s)
      for (std::size_t a = 0; a < 3; ++a) {
        const double tv = 0.5 * (model.next_dist(s, a) - truth.next_dist(s, a)).cwiseAbs().sum();
        CHECK(std::abs(g(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a))) <= c * tv + 1e-9);
      }
  }
}

TEST_CASE("telescoping identity") {
  Rng rng(23);
  const auto truth = random_mdp(4, 2, 0.9, rng);
  const auto pi = random_policy(4, 2, rng);
  const auto same = telescoping_sides(truth, truth, pi);
  CHECK(same.lhs == 0.0);
  CHECK(same.rhs == 0.0);
  for (int rep = 0; rep < 20; ++rep) {
    const auto model = perturb_dynamics(truth, 2.0, rng);
    const auto sides = telescoping_sides(truth, model, pi);
    CHECK(std::abs(sides.lhs - sides.rhs) <= 1e-8);
  }
}

TEST_CASE("telescoping rhs equals the sum of hybrid-return increments") {
  Rng rng(29);
  const auto truth = random_mdp(4, 3, 0.9, rng);
  const auto model = perturb_dynamics(truth, 2.0, rng);
  const auto pi = random_policy(4, 3, rng);
  const auto sides = telescoping_sides(truth, model, pi);
  double sum = 0.0;
  for (int j = 0; j < 200; ++j) sum += hybrid_return(model, truth, pi, j + 1) - hybrid_return(model, truth, pi, j);
  CHECK(std::abs(sides.rhs - sum) <= 1e-6);
}

TEST_CASE("optimal policy basics") {
  const auto one = single_state(0.3, 0.9);
  CHECK(optimal_policy(one, 1e-10).action(0) == 0);
  Mat t(4, 2);
  t << 1, 0, 1, 0, 0, 1, 0, 1;
  Mat r(2, 2);
  r << 1, 0, 1, 0;
  const TabularMdp bandit(2, 2, t, r, Vec::Constant(2, 0.5), 0.9);
  const auto pi = optimal_policy(bandit, 1e-10);
  CHECK(pi.action(0) == 0);
  CHECK(pi.action(1) == 0);
  CHECK_THROWS_AS(optimal_policy(bandit, 0.0), std::invalid_argument);
}

TEST_CASE("ties go to the lowest action") {
  Mat t(4, 2);
  t << 1, 0, 1, 0, 0, 1, 0, 1;
  const TabularMdp flat(2, 2, t, Mat::Constant(2, 2, 0.5), Vec::Constant(2, 0.5), 0.9);
  const auto pi = optimal_policy(flat, 1e-10);
  CHECK(pi.action(0) == 0);
  CHECK(pi.action(1) == 0);
}

TEST_CASE("optimal policy dominates enumeration") {
  Rng rng(31);
  const double tol = 1e-10;
  for (int rep = 0; rep < 20; ++rep) {
    const auto mdp = random_mdp(4, 3, 0.9, rng);
    const double best = expected_return(mdp, optimal_policy(mdp, tol));
    const auto count = count_deterministic_policies(4, 3, 1000);
    REQUIRE(count.has_value());
    CHECK(*count == 81);
    double enum_best = -1e300;
    for (std::size_t i = 0; i < *count; ++i) {
      enum_best = std::max(enum_best, expected_return(mdp, deterministic_policy_at(i, 4, 3)));
    }
    CHECK(best >= enum_best - 1e-8);
    CHECK(best >= enum_best - tol * (1 + mdp.discount()) / (1 - mdp.discount()));
  }
}

TEST_CASE("enumeration cap") {
  CHECK_FALSE(count_deterministic_policies(30, 4, 1u << 20).has_value());
  const auto p = deterministic_policy_at(5, 3, 2);  // 5 = 101b
  CHECK(p.action(0) == 1);
  CHECK(p.action(1) == 0);
  CHECK(p.action(2) == 1);
}

TEST_CASE("construction validation") {
  Mat bad(1, 1);
  bad << 0.9;
  CHECK_THROWS_AS(TabularMdp(1, 1, bad, Mat::Zero(1, 1), Vec::Ones(1), 0.9), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 1, Mat::Ones(1, 1), Mat::Zero(1, 1), Vec::Ones(1), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(TabularMdp(1, 1, Mat::Ones(1, 1), Mat::Constant(1, 1, 2.0), Vec::Ones(1), 0.5, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(TabularPolicy(Mat::Constant(1, 2, 0.4)), std::invalid_argument);
}

TEST_CASE("r_max survives reward edits") {
  Rng rng(2);
  const auto mdp = random_mdp(3, 2, 0.9, rng);
  CHECK(mdp.r_max() == 1.0);
  CHECK(mdp.with_reward(mdp.reward() * 0.1).r_max() == 1.0);
}

TEST_CASE("json round trip") {
  Rng rng(8);
  const auto mdp = random_mdp(3, 2, 0.95, rng);
  nlohmann::json j;
  to_json(j, mdp);
  CHECK(j.at("transition").size() == 3);
  CHECK(j.at("transition")[0].size() == 2);
  const auto back = tabular_mdp_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.transition() == mdp.transition());
  CHECK(back.reward() == mdp.reward());
  CHECK(back.discount() == mdp.discount());
  CHECK(back.r_max() == mdp.r_max());
}
