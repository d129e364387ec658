#include "mopo/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#ifndef MOPO_KIT_DATA_DIR
#define MOPO_KIT_DATA_DIR "data"
#endif

namespace mopo {

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::random: return "random";
    case DatasetKind::medium: return "medium";
    case DatasetKind::mixed: return "mixed";
    case DatasetKind::medium_expert: return "medium-expert";
  }
  return "unknown";
}

DatasetKind dataset_kind_from_string(const std::string& name) {
  if (name == "random") return DatasetKind::random;
  if (name == "medium") return DatasetKind::medium;
  if (name == "mixed") return DatasetKind::mixed;
  if (name == "medium-expert") return DatasetKind::medium_expert;
  throw std::invalid_argument("unknown dataset kind: " + name);
}

// ------------------------------------------------------------------- anchors

std::string task_key(const std::string& env_name, const std::string& reward_name) {
  if (reward_name.empty() || reward_name == make_env(env_name)->default_reward()) return env_name;
  return env_name + ":" + reward_name;
}

AnchorTable AnchorTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read anchor file " + path.string());
  const auto j = nlohmann::json::parse(in);
  std::map<std::string, Anchor> anchors;
  for (const auto& [task, v] : j.at("anchors").items()) {
    anchors[task] = Anchor{v.at("random_return").get<double>(), v.at("expert_return").get<double>(),
                           v.at("anchor_seed").get<std::uint64_t>()};
  }
  return AnchorTable(std::move(anchors));
}

const AnchorTable& AnchorTable::builtin() {
  static const AnchorTable table = load(std::filesystem::path(MOPO_KIT_DATA_DIR) / "anchors.json");
  return table;
}

void AnchorTable::save(const std::filesystem::path& path) const {
  nlohmann::json anchors = nlohmann::json::object();
  for (const auto& [task, a] : anchors_) {
    anchors[task] = {{"random_return", a.random_return}, {"expert_return", a.expert_return}, {"anchor_seed", a.anchor_seed}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write anchor file " + path.string());
  out << nlohmann::json{{"version", 1}, {"anchors", anchors}}.dump(2) << "\n";
}

const Anchor& AnchorTable::at(const std::string& task) const {
  auto it = anchors_.find(task);
  if (it == anchors_.end()) throw std::invalid_argument("no score anchors registered for " + task);
  return it->second;
}

Anchor compute_anchor(const std::string& env_name, const std::string& reward_name, std::uint64_t seed, int n_episodes) {
  auto env = make_env(env_name);
  const auto random = run_episodes(*env, reward_name, uniform_random_policy(env->action_dim()), n_episodes, seed);
  const auto expert = run_episodes(*env, reward_name, scripted_expert(env_name, reward_name), n_episodes, seed);
  return Anchor{random.mean, expert.mean, seed};
}

AnchorTable compute_builtin_anchors() {
  AnchorTable table;
  for (const auto& env_name : env_names()) {
    for (const auto& reward : make_env(env_name)->reward_names()) {
      table.set(task_key(env_name, reward), compute_anchor(env_name, reward, 20240601));
    }
  }
  return table;
}

double normalized_score(const std::string& task, double raw_return, const AnchorTable& anchors) {
  const Anchor& a = anchors.at(task);
  if (!(a.expert_return > a.random_return)) throw std::invalid_argument("degenerate anchors for " + task);
  return 100.0 * (raw_return - a.random_return) / (a.expert_return - a.random_return);
}

// ---------------------------------------------------------------- collection

namespace {

struct Recorder {
  RolloutBuffer buffer;
  std::vector<char> episode_end;

  Recorder(int ds, int da, std::size_t capacity) : buffer(ds, da, capacity) {}
  void add(const Vec& s, const Vec& a, const StepResult& out) {
    buffer.add(s, a, out.reward, out.next_state, out.terminal);
    episode_end.push_back(out.terminal || out.truncated ? 1 : 0);
  }
};

/// Runs `policy` in `env` for exactly `steps` transitions, episodes back to back.
void roll_out(ToyEnv& env, const ActionPolicy& policy, std::size_t steps, Rng& rng, Recorder& rec) {
  Vec s = env.reset(rng);
  for (std::size_t t = 0; t < steps; ++t) {
    const Vec a = policy(s, rng);
    const auto out = env.step(a, rng);
    rec.add(s, a, out);
    s = (out.terminal || out.truncated) ? env.reset(rng) : out.next_state;
  }
}

ActionPolicy stochastic_policy(std::shared_ptr<const ActorCritic> ac) {
  return [ac](const Vec& s, Rng& rng) { return ac->act(s, rng, false); };
}

double evaluate_score(const ToyEnv& env, const ActorCritic& ac, const std::string& task, int episodes,
                      std::uint64_t seed, const AnchorTable& anchors) {
  const auto stats = run_episodes(
      env, env.reward_name(), [&ac](const Vec& s, Rng& rng) { return ac.act(s, rng, true); }, episodes, seed);
  return normalized_score(task, stats.mean, anchors);
}

struct BehaviorOutcome {
  std::shared_ptr<ActorCritic> medium;
  std::shared_ptr<ActorCritic> expert;
  double best_score = -1e300;
  bool reached = false;
  std::size_t steps = 0;
};

/// Online training; stops once the deterministic policy reaches `stop_score`.
BehaviorOutcome train_behavior(const ToyEnv& prototype, const std::string& task, std::size_t budget, double stop_score,
                               std::uint64_t seed, const BehaviorConfig& cfg, const AnchorTable& anchors,
                               Recorder& rec) {
  auto env = prototype.clone();
  Rng rng(derive_seed(seed, 1));
  Rng init_rng(derive_seed(seed, 2));
  auto ac = std::make_shared<ActorCritic>(env->state_dim(), env->action_dim(), cfg.actor_critic, init_rng);
  const auto random = uniform_random_policy(env->action_dim());
  BehaviorOutcome outcome;
  Vec s = env->reset(rng);
  for (std::size_t t = 0; t < budget; ++t) {
    const Vec a = t < cfg.warmup_steps ? random(s, rng) : ac->act(s, rng, false);
    const auto out = env->step(a, rng);
    rec.add(s, a, out);
    s = (out.terminal || out.truncated) ? env->reset(rng) : out.next_state;
    if (t + 1 >= cfg.warmup_steps) {
      auto batch = rec.buffer.sample(cfg.batch_size, rng);
      ac->update(batch, rng);
    }
    if ((t + 1) % cfg.eval_every == 0 && t + 1 >= cfg.warmup_steps) {
      const double score = evaluate_score(*env, *ac, task, cfg.eval_episodes, derive_seed(seed, 1000 + t), anchors);
      outcome.best_score = std::max(outcome.best_score, score);
      if (!outcome.medium && score >= cfg.medium_threshold) outcome.medium = std::make_shared<ActorCritic>(*ac);
      if (score >= stop_score) {
        outcome.expert = std::make_shared<ActorCritic>(*ac);
        outcome.reached = true;
        outcome.steps = t + 1;
        return outcome;
      }
    }
  }
  outcome.steps = budget;
  return outcome;
}

std::string fmt_score(double x) {
  std::ostringstream out;
  out.precision(4);
  out << x;
  return out.str();
}

}  // namespace

TransitionDataset collect_dataset(const ToyEnv& prototype, const DatasetRecipe& recipe, std::uint64_t seed,
                                  const BehaviorConfig& behavior, const AnchorTable& anchors) {
  if (recipe.steps < 1) throw std::invalid_argument("step budget must be at least 1");
  if (!(recipe.expert_fraction > 0.0 && recipe.expert_fraction < 1.0)) {
    throw std::invalid_argument("expert fraction must lie in (0,1)");
  }
  auto env = prototype.clone();
  const std::string reward = recipe.reward.empty() ? env->default_reward() : recipe.reward;
  env->set_reward(reward);
  const std::string task = task_key(env->name(), reward);
  const int ds = env->state_dim();
  const int da = env->action_dim();

  DatasetMeta meta;
  meta.env_name = env->name();
  meta.behavior_kind = to_string(recipe.kind);
  meta.seed = seed;
  meta.reward_name = reward;
  meta.original_reward = reward;
  Rng rng(derive_seed(seed, 0));

  auto finish = [&](const Recorder& rec, const std::string& source) {
    DatasetMeta m = meta;
    m.segments = {DatasetSegment{source, 0, rec.buffer.size()}};
    return rec.buffer.to_dataset(m, &rec.episode_end);
  };

  switch (recipe.kind) {
    case DatasetKind::random: {
      Recorder rec(ds, da, recipe.steps);
      roll_out(*env, uniform_random_policy(da), recipe.steps, rng, rec);
      return finish(rec, "random");
    }
    case DatasetKind::mixed: {
      Recorder rec(ds, da, recipe.steps);
      const auto out = train_behavior(*env, task, recipe.steps, behavior.mixed_threshold, recipe.behavior_seed,
                                      behavior, anchors, rec);
      if (!out.reached) {
        throw ThresholdNotReached("behavior training reached a normalized score of " + fmt_score(out.best_score) +
                                      ", below the mixed threshold " + fmt_score(behavior.mixed_threshold) + " within " +
                                      std::to_string(recipe.steps) + " steps",
                                  out.best_score);
      }
      return finish(rec, "replay");
    }
    case DatasetKind::medium:
    case DatasetKind::medium_expert: {
      const bool want_expert = recipe.kind == DatasetKind::medium_expert;
      const double stop = want_expert ? behavior.expert_threshold : behavior.medium_threshold;
      const std::size_t budget = std::max<std::size_t>(recipe.steps, 50000);
      Recorder scratch(ds, da, budget);
      const auto out = train_behavior(*env, task, budget, stop, recipe.behavior_seed, behavior, anchors, scratch);
      if (!out.reached) {
        throw ThresholdNotReached("behavior training reached a normalized score of " + fmt_score(out.best_score) +
                                      ", below the " + std::string(want_expert ? "expert" : "medium") + " threshold " +
                                      fmt_score(stop) + " within " + std::to_string(budget) + " steps",
                                  out.best_score);
      }
      if (!want_expert) {
        Recorder rec(ds, da, recipe.steps);
        roll_out(*env, stochastic_policy(out.medium), recipe.steps, rng, rec);
        return finish(rec, "medium");
      }
      const auto n_expert = static_cast<std::size_t>(std::llround(recipe.expert_fraction * recipe.steps));
      const std::size_t n_partner = recipe.steps - n_expert;
      if (n_expert == 0 || n_partner == 0) throw std::invalid_argument("medium-expert needs records from both sources");
      Recorder rec_e(ds, da, n_expert);
      roll_out(*env, stochastic_policy(out.expert), n_expert, rng, rec_e);
      Recorder rec_p(ds, da, n_partner);
      const bool partner_random = recipe.partner == DatasetKind::random;
      roll_out(*env, partner_random ? uniform_random_policy(da) : stochastic_policy(out.medium), n_partner, rng, rec_p);
      TransitionDataset data = finish(rec_e, "expert");
      TransitionDataset tail = finish(rec_p, partner_random ? "random" : "medium");
      return data.concat(tail);
    }
  }
  throw std::logic_error("unhandled dataset kind");
}

TransitionDataset relabel_rewards(const TransitionDataset& data, const std::string& new_reward_name) {
  const RewardFn r = reward_function(data.meta().env_name, new_reward_name);
  Vec rewards(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    rewards(c) = r(data.states().col(c), data.actions().col(c), data.next_states().col(c));
  }
  TransitionDataset out = data.with_rewards(rewards);
  out.meta().reward_name = new_reward_name;
  return out;
}

std::vector<double> episode_returns(const TransitionDataset& data) {
  std::vector<std::size_t> breaks;  // exclusive ends of segments
  for (const auto& seg : data.meta().segments) breaks.push_back(seg.begin + seg.count);
  std::vector<double> returns;
  double running = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    running += data.rewards()(static_cast<Eigen::Index>(i));
    if (data.dones()[i]) {
      returns.push_back(running);
      running = 0.0;
    } else if (std::find(breaks.begin(), breaks.end(), i + 1) != breaks.end()) {
      running = 0.0;  // unfinished episode at a segment end
    }
  }
  return returns;
}

BatchStats batch_stats(const TransitionDataset& data) {
  const auto returns = episode_returns(data);
  if (returns.empty()) throw std::invalid_argument("dataset holds no complete episode");
  BatchStats st;
  st.episodes = returns.size();
  st.max_return = *std::max_element(returns.begin(), returns.end());
  double sum = 0.0;
  for (double r : returns) sum += r;
  st.mean_return = sum / static_cast<double>(returns.size());
  return st;
}

std::vector<char> terminal_flags(const TransitionDataset& data) {
  const TerminationFn done = termination_function(data.meta().env_name);
  std::vector<char> flags(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    flags[i] = done(data.next_states().col(static_cast<Eigen::Index>(i))) ? 1 : 0;
  }
  return flags;
}

}  // namespace mopo
