#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mopo/datasets.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace mopo;

namespace {

TransitionDataset collect(const std::string& env, DatasetKind kind, std::size_t steps, std::uint64_t seed,
                          std::uint64_t behavior_seed = 1) {
  DatasetRecipe recipe;
  recipe.kind = kind;
  recipe.steps = steps;
  recipe.behavior_seed = behavior_seed;
  return collect_dataset(*make_env(env), recipe, seed);
}

TransitionDataset hand_built(const std::vector<double>& rewards, const std::vector<char>& dones) {
  DatasetBuilder b(4, 2);
  for (std::size_t i = 0; i < rewards.size(); ++i) b.add(Vec::Zero(4), Vec::Zero(2), rewards[i], Vec::Zero(4), dones[i]);
  DatasetMeta meta;
  meta.env_name = "pointmass-2d";
  return b.build(meta);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("random recipe has uniform action marginals") {
  const auto data = collect("pointmass-2d", DatasetKind::random, 20000, 4);
  REQUIRE(data.size() == 20000);
  CHECK(data.meta().segments.size() == 1);
  CHECK(data.meta().segments[0].source == "random");
  // Pearson chi-square over 20 equal bins per action dimension; the 0.999
  // quantile of chi-square with 19 degrees of freedom is 43.82.
  const int bins = 20;
  for (int d = 0; d < 2; ++d) {
    std::vector<double> counts(bins, 0.0);
    for (Eigen::Index c = 0; c < data.actions().cols(); ++c) {
      const double a = data.actions()(d, c);
      REQUIRE(a >= -1.0);
      REQUIRE(a <= 1.0);
      counts[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>((a + 1.0) / 2.0 * bins)))] += 1.0;
    }
    const double expected = static_cast<double>(data.size()) / bins;
    double chi2 = 0.0;
    for (double k : counts) chi2 += (k - expected) * (k - expected) / expected;
    CHECK(chi2 < 43.82);
  }
}

TEST_CASE("medium-expert concatenates half and half") {
  const auto data = collect("pointmass-2d", DatasetKind::medium_expert, 2000, 5);
  REQUIRE(data.size() == 2000);
  const auto& segs = data.meta().segments;
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].source == "expert");
  CHECK(segs[0].begin == 0);
  CHECK(segs[0].count == 1000);
  CHECK(segs[1].source == "medium");
  CHECK(segs[1].begin == 1000);
  CHECK(segs[1].count == 1000);
  CHECK(data.meta().behavior_kind == "medium-expert");
}

TEST_CASE("collection is reproducible byte for byte") {
  const auto dir = std::filesystem::temp_directory_path() / "mopo_test_datasets";
  std::filesystem::create_directories(dir);
  const auto a = collect("pointmass-2d", DatasetKind::mixed, 50000, 8);
  const auto b = collect("pointmass-2d", DatasetKind::mixed, 50000, 8);
  write_dataset(a, dir / "a.jsonl");
  write_dataset(b, dir / "b.jsonl");
  CHECK(file_bytes(dir / "a.jsonl") == file_bytes(dir / "b.jsonl"));
  CHECK(file_bytes(header_path_for(dir / "a.jsonl")) == file_bytes(header_path_for(dir / "b.jsonl")));
  const auto c = collect("pointmass-2d", DatasetKind::random, 500, 9);
  const auto d = collect("pointmass-2d", DatasetKind::random, 500, 10);
  CHECK_FALSE(c.states().isApprox(d.states()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("relabeling") {
  const auto data = collect("pointmass-2d", DatasetKind::random, 3000, 12);
  SUBCASE("original reward leaves the dataset unchanged") {
    const auto same = relabel_rewards(data, "forward");
    CHECK(same.rewards() == data.rewards());
    CHECK(same.meta().reward_name == "forward");
  }
  SUBCASE("only rewards change and batch stats move by the record deltas") {
    const auto shifted = relabel_rewards(data, "angle-30");
    CHECK(shifted.states() == data.states());
    CHECK(shifted.actions() == data.actions());
    CHECK(shifted.next_states() == data.next_states());
    CHECK(shifted.dones() == data.dones());
    CHECK(shifted.meta().reward_name == "angle-30");
    CHECK(shifted.meta().original_reward == "forward");
    const auto before = episode_returns(data);
    const auto after = episode_returns(shifted);
    REQUIRE(before.size() == after.size());
    // Recompute each episode's delta from the per-record reward differences.
    const Vec delta = shifted.rewards() - data.rewards();
    std::size_t ep = 0;
    double running = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      running += delta(static_cast<Eigen::Index>(i));
      if (data.dones()[i]) {
        CHECK(after[ep] - before[ep] == doctest::Approx(running).epsilon(1e-12));
        running = 0.0;
        ++ep;
      }
    }
    CHECK(ep == before.size());
  }
  SUBCASE("angle reward on a unit x velocity") {
    const RewardFn r = reward_function("pointmass-2d", "angle-30");
    Vec s = Vec::Zero(4), a = Vec::Zero(2), s2 = Vec::Zero(4);
    s2(2) = 1.0;
    CHECK(r(s, a, s2) == doctest::Approx(std::cos(std::numbers::pi / 6)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(relabel_rewards(data, "jump"), std::invalid_argument);
}

TEST_CASE("batch stats over complete episodes") {
  const auto one = batch_stats(hand_built({1, 2, 3}, {0, 0, 1}));
  CHECK(one.mean_return == 6.0);
  CHECK(one.max_return == 6.0);
  CHECK(one.episodes == 1);
  const auto two = batch_stats(hand_built({2, 3, 4, 5}, {0, 1, 0, 1}));
  CHECK(two.mean_return == 7.0);
  CHECK(two.max_return == 9.0);
  // A trailing unfinished run is not an episode.
  CHECK(batch_stats(hand_built({2, 3, 4, 50}, {0, 1, 0, 0})).episodes == 1);
  CHECK_THROWS_AS(batch_stats(hand_built({1, 2}, {0, 0})), std::invalid_argument);
}

TEST_CASE("normalized score") {
  AnchorTable table;
  table.set("pointmass-2d", Anchor{-10.0, 30.0, 1});
  table.set("flat", Anchor{5.0, 5.0, 1});
  CHECK(normalized_score("pointmass-2d", -10.0, table) == 0.0);
  CHECK(normalized_score("pointmass-2d", 30.0, table) == 100.0);
  CHECK(normalized_score("pointmass-2d", 10.0, table) == 50.0);
  CHECK(normalized_score("pointmass-2d", 10.5, table) > normalized_score("pointmass-2d", 10.0, table));
  CHECK_THROWS_AS(normalized_score("flat", 5.0, table), std::invalid_argument);
  CHECK_THROWS_AS(normalized_score("halfcheetah", 5.0, table), std::invalid_argument);
  CHECK(task_key("pointmass-2d", "forward") == "pointmass-2d");
  CHECK(task_key("pointmass-2d", "angle-45") == "pointmass-2d:angle-45");
}

TEST_CASE("shipped anchors match a recomputation") {
  const auto& shipped = AnchorTable::builtin();
  const auto fresh = compute_builtin_anchors();
  REQUIRE(fresh.all().size() == shipped.all().size());
  for (const auto& [task, a] : fresh.all()) {
    REQUIRE(shipped.contains(task));
    CHECK(shipped.at(task).random_return == doctest::Approx(a.random_return).epsilon(1e-9));
    CHECK(shipped.at(task).expert_return == doctest::Approx(a.expert_return).epsilon(1e-9));
    CHECK(shipped.at(task).expert_return > shipped.at(task).random_return);
  }
  const auto dir = std::filesystem::temp_directory_path() / "mopo_test_anchors";
  std::filesystem::create_directories(dir);
  fresh.save(dir / "anchors.json");
  CHECK(AnchorTable::load(dir / "anchors.json").at("pointmass-2d").expert_return == fresh.at("pointmass-2d").expert_return);
  std::filesystem::remove_all(dir);
}

TEST_CASE("task-shift batch stays below the scripted angle policy") {
  const auto data = collect("pointmass-2d", DatasetKind::mixed, 50000, 1);
  auto env = make_env("pointmass-2d");
  for (const char* reward : {"angle-30", "angle-45", "angle-60", "angle-90"}) {
    const double batch_max = batch_stats(relabel_rewards(data, reward)).max_return;
    const auto scripted = run_episodes(*env, reward, scripted_expert("pointmass-2d", reward), 10, 2);
    CHECK(batch_max < scripted.mean);
  }
}

TEST_CASE("threshold failures report the attained score") {
  DatasetRecipe recipe;
  recipe.kind = DatasetKind::mixed;
  recipe.steps = 1200;
  BehaviorConfig behavior;
  behavior.mixed_threshold = 1e6;
  behavior.eval_every = 100;
  try {
    collect_dataset(*make_env("pointmass-2d"), recipe, 1, behavior);
    FAIL("expected ThresholdNotReached");
  } catch (const ThresholdNotReached& e) {
    CHECK(std::isfinite(e.attained_score()));
    CHECK(std::string(e.what()).find("mixed threshold") != std::string::npos);
  }
  recipe.steps = 0;
  CHECK_THROWS_AS(collect_dataset(*make_env("pointmass-2d"), recipe, 1), std::invalid_argument);
}
