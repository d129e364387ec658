#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "mopo/random_mdp.hpp"
#include "mopo/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace mopo;

namespace {

// Untrained member with constant outputs: next-state mean s + delta, log-variance `logvar`.
GaussianDynamicsModel constant_member(int ds, const Vec& delta, const Vec& logvar) {
  Rng rng(1);
  DynamicsConfig cfg;
  cfg.hidden = {4};
  GaussianDynamicsModel m(ds, 1, cfg, rng);
  m.zero_output_layers();
  m.params().max_logvar.setConstant(80.0);
  m.params().min_logvar.setConstant(-80.0);
  m.params().mean_head.bias = delta;
  m.params().logvar_head.bias = logvar;
  return m;
}

std::shared_ptr<const GaussianDynamicsEnsemble> make_ensemble(std::vector<GaussianDynamicsModel> members) {
  std::vector<std::size_t> elites(members.size());
  std::iota(elites.begin(), elites.end(), 0);
  return std::make_shared<const GaussianDynamicsEnsemble>(std::move(members), elites,
                                                          std::vector<double>(elites.size(), 0.0), DynamicsConfig{});
}

Mat random_inputs(int rows, int cols, double scale, Rng& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

double median(Vec v) {
  std::sort(v.data(), v.data() + v.size());
  return v(v.size() / 2);
}

Vec ranks(const Vec& v) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v(a) < v(b); });
  Vec r(v.size());
  for (std::size_t k = 0; k < idx.size(); ++k) r(idx[k]) = static_cast<double>(k);
  return r;
}

double spearman(const Vec& a, const Vec& b) {
  const Vec ra = ranks(a).array() - ranks(a).mean();
  const Vec rb = ranks(b).array() - ranks(b).mean();
  return ra.dot(rb) / (ra.norm() * rb.norm());
}

}  // namespace

TEST_CASE("oracle total variation estimator") {
  Rng rng(3);
  const auto truth = random_mdp(4, 2, 0.9, rng);
  CHECK(oracle_tv(truth, truth).table().isZero());

  Mat t(2, 2);
  t << 0, 1, 0, 1;
  Mat tm(2, 2);
  tm << 1, 0, 0, 1;
  const TabularMdp a(2, 1, t, Mat::Zero(2, 1), Vec::Constant(2, 0.5), 0.9);
  CHECK(oracle_tv(a, a.with_transition(tm))(0, 0) == 1.0);
  CHECK(oracle_tv(a, a.with_transition(tm))(1, 0) == 0.0);
}

TEST_CASE("oracle total variation estimator is admissible") {
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto truth = random_mdp(5, 3, 0.9, rng);
    const auto model = perturb_dynamics(truth, 2.0, rng);
    const auto u = oracle_tv(truth, model);
    const double c = truth.r_max() / (1.0 - truth.discount());
    for (int p = 0; p < 5; ++p) {
      const Mat g = model_gap_table(truth, model, random_policy(5, 3, rng));
      CHECK((c * u.table() - g.cwiseAbs()).minCoeff() >= -1e-9);
    }
  }
}

TEST_CASE("max and mean std on constructed members") {
  const Vec zero = Vec::Zero(3);
  auto ens = make_ensemble({constant_member(2, zero, zero), constant_member(2, zero, zero)});
  Rng rng(7);
  const Mat s = random_inputs(2, 5, 1.0, rng);
  const Mat a = random_inputs(1, 5, 1.0, rng);
  const Vec u = max_std(ens).evaluate(s, a);
  CHECK((u.array() - std::sqrt(3.0)).abs().maxCoeff() <= 1e-12);
  CHECK((mean_std(ens).evaluate(s, a) - u).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(disagreement(ens).evaluate(s, a).isZero());

  auto loud = make_ensemble(
      {constant_member(2, zero, zero), constant_member(2, zero, Vec::Constant(3, std::log(4.0))), constant_member(2, zero, zero)});
  CHECK((max_std(loud).evaluate(s, a).array() - 2.0 * std::sqrt(3.0)).abs().maxCoeff() <= 1e-12);

  Vec tiny_reward(2);
  tiny_reward << 0.0, -80.0;
  Vec wide(2);
  wide << std::log(9.0), -80.0;
  auto pair = make_ensemble({constant_member(1, Vec::Zero(2), tiny_reward), constant_member(1, Vec::Zero(2), wide)});
  const Mat s1 = random_inputs(1, 4, 1.0, rng);
  const Mat a1 = random_inputs(1, 4, 1.0, rng);
  CHECK((mean_std(pair).evaluate(s1, a1).array() - 2.0).abs().maxCoeff() <= 1e-9);
  CHECK((max_std(pair).evaluate(s1, a1).array() - 3.0).abs().maxCoeff() <= 1e-9);
}

TEST_CASE("disagreement on constructed members") {
  Vec d0(2), d1(2);
  d0 << 0, 0;
  d1 << 2, 0;
  auto pair = make_ensemble({constant_member(1, d0, Vec::Zero(2)), constant_member(1, d1, Vec::Zero(2))});
  Rng rng(9);
  const Mat s = random_inputs(1, 6, 1.0, rng);
  const Mat a = random_inputs(1, 6, 1.0, rng);
  CHECK((disagreement(pair).evaluate(s, a).array() - 1.0).abs().maxCoeff() <= 1e-12);
  auto single = make_ensemble({constant_member(1, d1, Vec::Zero(2))});
  CHECK(disagreement(single).evaluate(s, a).isZero());
}

TEST_CASE("true prediction error") {
  Vec d(3);
  d << 3, 4, 0;
  auto ens = make_ensemble({constant_member(2, d, Vec::Zero(3))});
  Rng rng(11);
  const Mat s = random_inputs(2, 3, 1.0, rng);
  const Mat a = random_inputs(1, 3, 1.0, rng);
  const TrueNextState identity = [](const Mat& st, const Mat&) { return st; };
  CHECK((oracle_true_pred_error(identity, ens).evaluate(s, a).array() - 5.0).abs().maxCoeff() <= 1e-12);
  const TrueNextState shifted = [&](const Mat& st, const Mat&) { return Mat(st.colwise() + d.head(2)); };
  CHECK(oracle_true_pred_error(shifted, ens).evaluate(s, a).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(oracle_true_pred_error(TrueNextState{}, ens), std::invalid_argument);
}

TEST_CASE("untrained ensembles are rejected") {
  CHECK_THROWS_AS(max_std(nullptr), std::invalid_argument);
  CHECK_THROWS_AS(disagreement(std::make_shared<const GaussianDynamicsEnsemble>()), std::invalid_argument);
}

TEST_CASE("trained ensemble disagreement grows away from the data") {
  const auto data = mopo::testing::linear_fixture(3000, 0.1, 31);
  DynamicsConfig cfg;
  cfg.hidden = {32, 32};
  cfg.seed = 4;
  auto ens = std::make_shared<const GaussianDynamicsEnsemble>(train_ensemble(data, 5, 4, cfg));
  const auto u_max = max_std(ens);
  const auto u_mean = mean_std(ens);
  Rng rng(12);
  const Mat s_in = random_inputs(2, 500, 2.0, rng);
  const Mat a_in = random_inputs(1, 500, 1.0, rng);
  const Mat s_out = random_inputs(2, 500, 2.0, rng).array() + 12.0;
  const Mat a_out = random_inputs(1, 500, 1.0, rng).array() * 8.0;
  CHECK(median(disagreement(ens).evaluate(s_out, a_out)) > median(disagreement(ens).evaluate(s_in, a_in)));

  const Mat s_any = random_inputs(2, 1000, 8.0, rng);
  const Mat a_any = random_inputs(1, 1000, 4.0, rng);
  const Vec mx = u_max.evaluate(s_any, a_any);
  const Vec mn = u_mean.evaluate(s_any, a_any);
  CHECK((mx - mn).minCoeff() >= 0.0);
  CHECK(spearman(mx, mn) > 0.9);

  Mat a_true(2, 2);
  a_true << 0.9, 0.1, -0.2, 0.8;
  Vec b_true(2);
  b_true << 0.5, -0.3;
  const TrueNextState truth = [&](const Mat& s, const Mat& a) { return Mat(a_true * s + b_true * a); };
  const Vec err = oracle_true_pred_error(truth, ens).evaluate(s_any, a_any);
  MESSAGE("rank correlation of true prediction error and max-std: " << spearman(err, mx));
  CHECK(err.minCoeff() >= 0.0);
}

TEST_CASE("tabular eps_u") {
  Rng rng(13);
  const auto model = random_mdp(4, 2, 0.9, rng);
  const auto pi = random_policy(4, 2, rng);
  CHECK(epsilon_u(model, pi, constant_estimator(4, 2, 0.0)) == 0.0);
  CHECK(epsilon_u(model, pi, constant_estimator(4, 2, 0.3)) == doctest::Approx(3.0).epsilon(1e-12));

  const auto truth = random_mdp(4, 2, 0.9, rng);
  const auto m2 = truth.with_transition(perturb_dynamics(truth, 1.0, rng).transition());
  const auto u = oracle_tv(truth, m2);
  const double exact = epsilon_u(m2, pi, u);
  Rng mc_rng(14);
  const auto est = epsilon_u_monte_carlo(m2, pi, u, 400, 4000, mc_rng);
  CHECK(est.std_error > 0.0);
  CHECK(std::abs(est.mean - exact) <= 3.0 * est.std_error);
  CHECK_THROWS_AS(epsilon_u_monte_carlo(m2, pi, u, 0, 10, mc_rng), std::invalid_argument);
}

TEST_CASE("behavior policy has smaller eps_u than a policy leaving the data") {
  // s0 is well modeled; a1 leads to s1 and s2 where the model is wrong.
  Mat t(6, 3);
  t << 1, 0, 0,  //
      0, 1, 0,   //
      0, 1, 0,   //
      0, 0, 1,   //
      0, 0, 1,   //
      0, 1, 0;
  Mat tm = t;
  tm.row(2) << 0.2, 0.3, 0.5;
  tm.row(3) << 0.5, 0, 0.5;
  tm.row(4) << 1, 0, 0;
  tm.row(5) << 0.4, 0.6, 0;
  Vec mu = Vec::Zero(3);
  mu(0) = 1.0;
  const TabularMdp truth(3, 2, t, Mat::Zero(3, 2), mu, 0.9);
  const auto model = truth.with_transition(tm);
  const auto u = oracle_tv(truth, model);
  const auto behavior = TabularPolicy::deterministic({0, 0, 0}, 2);
  const auto far = TabularPolicy::deterministic({1, 1, 1}, 2);
  CHECK(epsilon_u(model, behavior, u) == 0.0);
  CHECK(epsilon_u(model, behavior, u) <= epsilon_u(model, far, u));
  CHECK(epsilon_u(model, far, u) > 0.5);
}

TEST_CASE("continuous eps_u with a zero estimator") {
  const auto data = mopo::testing::linear_fixture(1200, 0.1, 32);
  DynamicsConfig cfg;
  cfg.hidden = {8};
  cfg.max_epochs = 3;
  const auto ens = train_ensemble(data, 2, 2, cfg);
  Rng rng(15);
  const auto policy = [](const Vec&, Rng&) { return Vec(Vec::Zero(1)); };
  const auto init = [](Rng&) { return Vec(Vec::Zero(2)); };
  ContinuousEpsilonConfig ecfg;
  ecfg.horizon = 10;
  ecfg.n_rollouts = 8;
  CHECK(epsilon_u_monte_carlo(ens, policy, init, zero_estimator(), ecfg, rng).mean == 0.0);
  auto shared = std::make_shared<const GaussianDynamicsEnsemble>(ens);
  const auto est = epsilon_u_monte_carlo(ens, policy, init, max_std(shared), ecfg, rng);
  CHECK(est.mean > 0.0);
  CHECK(est.n_rollouts == 8);
  ecfg.n_rollouts = 0;
  CHECK_THROWS_AS(epsilon_u_monte_carlo(ens, policy, init, zero_estimator(), ecfg, rng), std::invalid_argument);
}

TEST_CASE("estimator names") {
  CHECK(estimator_kind_from_string("max-std") == EstimatorKind::max_std);
  CHECK(to_string(EstimatorKind::oracle_tv) == "oracle-tv");
  CHECK_THROWS_AS(estimator_kind_from_string("bogus"), std::invalid_argument);
  CHECK_THROWS_AS(tabular_estimator(Mat::Constant(2, 2, -1.0)), std::invalid_argument);
}
