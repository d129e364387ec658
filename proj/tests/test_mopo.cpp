#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mopo/mopo.hpp"

#include <functional>
#include <set>
#include <sstream>

using namespace mopo;

namespace {

const TransitionDataset& pointmass_data() {
  static const TransitionDataset data = [] {
    DatasetRecipe recipe;
    recipe.steps = 3000;
    return collect_dataset(*make_env("pointmass-2d"), recipe, 11);
  }();
  return data;
}

MopoConfig small_config() {
  MopoConfig cfg;
  cfg.ensemble_size = 3;
  cfg.elites = 2;
  cfg.dynamics.hidden = {16, 16};
  cfg.dynamics.max_epochs = 15;
  cfg.dynamics.holdout_size = 300;
  cfg.actor_critic.hidden = {16, 16};
  cfg.rollout_batch = 32;
  cfg.batch_size = 64;
  cfg.seed = 3;
  return cfg;
}

std::shared_ptr<const GaussianDynamicsEnsemble> small_ensemble() {
  static const auto ens = train_run_ensemble(small_config(), pointmass_data());
  return ens;
}

RolloutBuffer run(const MopoConfig& cfg, const ErrorEstimator& u, std::uint64_t seed, RolloutStats* stats = nullptr,
                  const TerminationFn& term = termination_function("pointmass-2d")) {
  RolloutBuffer buffer(4, 2, model_buffer_capacity(cfg));
  Rng rng(seed);
  const auto s = rollout_and_penalize(*small_ensemble(), nullptr, pointmass_data(), cfg, u, term, buffer, rng);
  if (stats) *stats = s;
  return buffer;
}

std::vector<double> record_key(const RolloutBuffer& b, std::size_t i) {
  std::vector<double> key;
  for (const Vec& v : {b.state(i), b.action(i), b.next_state(i)}) key.insert(key.end(), v.data(), v.data() + v.size());
  key.push_back(b.reward(i));
  return key;
}

}  // namespace

TEST_CASE("zero coefficient stores the sampled model reward") {
  auto cfg = small_config();
  cfg.penalty_coeff = 0.0;
  const auto buffer = run(cfg, max_std(small_ensemble()), 1);
  REQUIRE(buffer.size() > 0);
  for (std::size_t i = 0; i < buffer.size(); ++i) CHECK(buffer.reward(i) == buffer.audit(i).raw_reward);
}

TEST_CASE("one-step rollouts from four starts add at most four records") {
  auto cfg = small_config();
  cfg.rollout_horizon = 1;
  cfg.rollout_batch = 4;
  RolloutStats stats;
  const auto buffer = run(cfg, max_std(small_ensemble()), 2, &stats);
  CHECK(buffer.size() <= 4);
  CHECK(stats.added == buffer.size());
  CHECK(stats.started == 4);
}

TEST_CASE("max-std penalty audit") {
  auto cfg = small_config();
  cfg.penalty_coeff = 1.5;
  const auto ens = small_ensemble();
  const auto u = max_std(ens);
  RolloutStats stats;
  const auto buffer = run(cfg, u, 3, &stats);
  REQUIRE(buffer.size() == cfg.rollout_batch * static_cast<std::size_t>(cfg.rollout_horizon));
  std::set<std::size_t> elites(ens->elite_indices().begin(), ens->elite_indices().end());
  double max_seen = 0.0;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const auto& audit = buffer.audit(i);
    CHECK(audit.penalty > 0.0);
    CHECK(buffer.reward(i) < audit.raw_reward);
    CHECK(buffer.reward(i) == audit.raw_reward - cfg.penalty_coeff * audit.penalty);
    CHECK(elites.count(static_cast<std::size_t>(audit.member)) == 1);
    CHECK(u.evaluate(buffer.state(i), buffer.action(i)) == doctest::Approx(audit.penalty).epsilon(1e-12));
    max_seen = std::max(max_seen, audit.penalty);
  }
  CHECK(stats.penalty_max == max_seen);
}

TEST_CASE("logged member and draw reproduce each record") {
  // Replays one rollout by hand from its own stream.
  auto cfg = small_config();
  cfg.rollout_batch = 1;
  cfg.rollout_horizon = 3;
  cfg.penalty_coeff = 0.7;
  const auto ens = small_ensemble();
  const auto u = max_std(ens);
  const auto buffer = run(cfg, u, 77);
  REQUIRE(buffer.size() == 3);

  Rng outer(77);
  Rng r(derive_seed(outer(), 0));
  const auto& data = pointmass_data();
  std::uniform_int_distribution<std::size_t> pick_start(0, data.size() - 1);
  Vec s = data.states().col(static_cast<Eigen::Index>(pick_start(r)));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_elite(0, ens->elite_indices().size() - 1);
  for (std::size_t t = 0; t < 3; ++t) {
    Vec a(2);
    for (int d = 0; d < 2; ++d) a(d) = unif(r);
    const std::size_t e = pick_elite(r);
    const auto pred = ens->members()[ens->elite_indices()[e]].predict(s, a);
    Vec out = pred.mean.col(0);
    for (Eigen::Index d = 0; d < out.size(); ++d) out(d) += std::sqrt(pred.var(d, 0)) * normal(r);
    CHECK(buffer.audit(t).member == static_cast<int>(ens->elite_indices()[e]));
    CHECK(buffer.state(t).isApprox(s, 1e-12));
    CHECK(buffer.action(t) == a);
    CHECK(buffer.audit(t).raw_reward == doctest::Approx(out(4)).epsilon(1e-10));
    CHECK(buffer.next_state(t).isApprox(out.head(4), 1e-10));
    s = buffer.next_state(t);
  }
}

TEST_CASE("rollouts do not depend on the batch they run in") {
  auto cfg = small_config();
  cfg.rollout_batch = 4;
  const auto small = run(cfg, max_std(small_ensemble()), 9);
  cfg.rollout_batch = 12;
  const auto large = run(cfg, max_std(small_ensemble()), 9);
  std::set<std::vector<double>> keys;
  for (std::size_t i = 0; i < large.size(); ++i) keys.insert(record_key(large, i));
  for (std::size_t i = 0; i < small.size(); ++i) CHECK(keys.count(record_key(small, i)) == 1);
}

TEST_CASE("termination ends a rollout after storing the terminal record") {
  auto cfg = small_config();
  RolloutStats stats;
  const auto buffer = run(cfg, zero_estimator(), 4, &stats, [](const Vec&) { return true; });
  CHECK(buffer.size() == cfg.rollout_batch);
  CHECK(stats.terminated == cfg.rollout_batch);
  for (std::size_t i = 0; i < buffer.size(); ++i) CHECK(buffer.terminal(i));
}

TEST_CASE("rollout preconditions") {
  auto cfg = small_config();
  RolloutBuffer buffer(4, 2, 10);
  Rng rng(1);
  const auto term = termination_function("pointmass-2d");
  const TransitionDataset empty = pointmass_data().select({});
  CHECK_THROWS_AS(rollout_and_penalize(*small_ensemble(), nullptr, empty, cfg, zero_estimator(), term, buffer, rng),
                  std::invalid_argument);
  const GaussianDynamicsEnsemble untrained;
  CHECK_THROWS_AS(
      rollout_and_penalize(untrained, nullptr, pointmass_data(), cfg, zero_estimator(), term, buffer, rng),
      std::logic_error);
}

TEST_CASE("mixed batch composition") {
  const auto& data = pointmass_data();
  const auto flags = terminal_flags(data);
  RolloutBuffer model(4, 2, 100);
  for (int i = 0; i < 100; ++i) model.add(Vec::Zero(4), Vec::Zero(2), 1e6, Vec::Zero(4), false);
  Rng rng(5);
  auto count_model = [](const TransitionBatch& b) { return (b.rewards.array() == 1e6).count(); };

  CHECK(real_sample_count(256, 0.05) == 13);
  const auto b = mixed_batch(data, flags, model, 256, 0.05, rng);
  CHECK(b.size() == 256);
  CHECK(count_model(b) == 243);
  CHECK((b.rewards.head(13).array() != 1e6).all());

  CHECK(count_model(mixed_batch(data, flags, model, 256, 1.0, rng)) == 0);
  CHECK(count_model(mixed_batch(data, flags, model, 256, 0.0, rng)) == 256);
  for (std::size_t n : {1u, 7u, 100u, 255u, 1000u}) {
    for (double f : {0.0, 0.01, 0.05, 0.1, 0.5, 1.0}) {
      const auto mb = mixed_batch(data, flags, model, n, f, rng);
      CHECK(static_cast<std::size_t>(mb.size() - count_model(mb)) == real_sample_count(n, f));
      CHECK(real_sample_count(n, f) == static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9)));
    }
  }

  const RolloutBuffer empty(4, 2, 10);
  CHECK(count_model(mixed_batch(data, flags, empty, 64, 0.05, rng)) == 0);
  CHECK(mixed_batch(data, flags, empty, 64, 0.05, rng).size() == 64);
  CHECK_THROWS_AS(mixed_batch(data, flags, model, 0, 0.05, rng), std::invalid_argument);
}

TEST_CASE("config validation and JSON") {
  MopoConfig cfg;
  cfg.rollout_horizon = 5;
  cfg.penalty_coeff = 1.0;
  CHECK_NOTHROW(validate(cfg));
  const auto round = mopo_config_from_json(to_json(cfg));
  CHECK(to_json(round) == to_json(cfg));

  auto j = to_json(cfg);
  j["rollout_length"] = 5;
  CHECK_THROWS_AS(mopo_config_from_json(j), std::invalid_argument);
  j = to_json(cfg);
  j["dynamics"]["width"] = 3;
  CHECK_THROWS_AS(mopo_config_from_json(j), std::invalid_argument);
  j = to_json(cfg);
  j["penalty"] = "max_std";
  CHECK_THROWS_AS(mopo_config_from_json(j), std::invalid_argument);

  const std::vector<std::function<void(MopoConfig&)>> breakers{
      [](MopoConfig& c) { c.rollout_horizon = 0; }, [](MopoConfig& c) { c.rollout_batch = 0; },
      [](MopoConfig& c) { c.penalty_coeff = -0.1; }, [](MopoConfig& c) { c.batch_size = 0; },
      [](MopoConfig& c) { c.real_fraction = 1.5; },  [](MopoConfig& c) { c.elites = 9; }};
  for (const auto& bad : breakers) {
    MopoConfig c;
    bad(c);
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
  }
  for (auto k : {PenaltyKind::max_std, PenaltyKind::mean_std, PenaltyKind::disagreement, PenaltyKind::oracle,
                 PenaltyKind::none})
    CHECK(penalty_kind_from_string(to_string(k)) == k);
  CHECK(model_buffer_capacity(cfg) == 500u * 5u * 5u);
}

TEST_CASE("training is deterministic and evaluation uses its own env") {
  auto cfg = small_config();
  cfg.epochs = 2;
  cfg.steps_per_epoch = 20;
  const auto data = relabel_rewards(pointmass_data(), "angle-30");
  const auto env = make_env("pointmass-2d");
  const PolicyEvaluator evaluator(*env, "angle-30", 10, 21);
  CHECK(evaluator.task() == "pointmass-2d:angle-30");
  std::ostringstream a, b;
  const auto r1 = mopo_train(cfg, data, evaluator, small_ensemble());
  const auto r2 = mopo_train(cfg, data, evaluator, small_ensemble());
  write_metrics_csv(r1.history, a);
  write_metrics_csv(r2.history, b);
  CHECK(a.str() == b.str());
  CHECK(r1.history.size() == 2);
  CHECK(a.str().rfind("epoch,env_return_mean", 0) == 0);
  CHECK(r1.history.back().model_buffer_size == 2 * cfg.rollout_batch * static_cast<std::size_t>(cfg.rollout_horizon));
  // The evaluator never touched the prototype env.
  CHECK(env->elapsed_steps() == 0);

  cfg.penalty = PenaltyKind::oracle;
  CHECK_THROWS_AS(mopo_train(cfg, data, evaluator, small_ensemble()), std::invalid_argument);
  CHECK_NOTHROW(mopo_train(cfg, data, evaluator, small_ensemble(), true_dynamics("pointmass-2d")));
  cfg.penalty = PenaltyKind::none;
  cfg.penalty_coeff = 0.0;
  CHECK_NOTHROW(mopo_train(cfg, data, evaluator, small_ensemble()));
}
