#include "mopo/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mopo {

namespace {

double saturate(double v, double cap) { return std::clamp(v, -cap, cap); }

void check_action(const Vec& a, int dim) {
  if (a.size() != dim) throw std::invalid_argument("action has wrong dimension");
  if (!a.allFinite()) throw std::invalid_argument("action is not finite");
}

Vec clip_action(const Vec& a) { return a.cwiseMax(-1.0).cwiseMin(1.0); }

}  // namespace

std::optional<double> parse_angle_reward(const std::string& reward_name) {
  const std::string prefix = "angle-";
  if (reward_name.rfind(prefix, 0) != 0) return std::nullopt;
  const std::string digits = reward_name.substr(prefix.size());
  if (digits.empty() || digits.size() > 3 || !std::all_of(digits.begin(), digits.end(), ::isdigit)) return std::nullopt;
  const int deg = std::stoi(digits);
  if (deg > 180) return std::nullopt;
  return deg * std::numbers::pi / 180.0;
}

ToyEnv::ToyEnv(std::string name, int state_dim, int action_dim, int max_steps, double noise_std)
    : name_(std::move(name)), state_dim_(state_dim), action_dim_(action_dim), max_steps_(max_steps),
      noise_std_(noise_std) {
  if (noise_std < 0.0) throw std::invalid_argument("noise std must be nonnegative");
}

void ToyEnv::set_reward(const std::string& reward_name) {
  reward_fn_ = make_reward(reward_name);
  reward_name_ = reward_name;
}

Vec ToyEnv::reset(Rng& rng) {
  if (!reward_fn_) set_reward(default_reward());
  state_ = initial_state(rng);
  elapsed_ = 0;
  needs_reset_ = false;
  return state_;
}

StepResult ToyEnv::step(const Vec& action, Rng& rng) {
  if (needs_reset_) throw std::logic_error("step called before reset or after the episode ended");
  check_action(action, action_dim_);
  const Vec a = clip_action(action);
  StepResult out;
  out.next_state = mean_next_state(state_, a);
  if (noise_std_ > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std_);
    for (int k : noisy_components()) out.next_state(k) += noise(rng);
  }
  out.reward = reward_fn_(state_, a, out.next_state);
  out.terminal = is_terminal(out.next_state);
  ++elapsed_;
  out.truncated = !out.terminal && elapsed_ >= max_steps_;
  state_ = out.next_state;
  needs_reset_ = out.terminal || out.truncated;
  return out;
}

// ---------------------------------------------------------------- point mass

PointMass2d::PointMass2d(double noise_std) : ToyEnv("pointmass-2d", 4, 2, 100, noise_std) {}

Vec PointMass2d::force(const Vec& a) {
  const double n = a.norm();
  return n > 1.0 ? Vec(a / n) : a;
}

Vec PointMass2d::mean_next_state(const Vec& s, const Vec& a) const {
  const Vec f = force(clip_action(a));
  Vec out(4);
  out(2) = kDamping * s(2) + kGain * f(0);
  out(3) = kDamping * s(3) + kGain * f(1);
  out(0) = s(0) + kDt * out(2);
  out(1) = s(1) + kDt * out(3);
  return out;
}

bool PointMass2d::is_terminal(const Vec& s) const {
  if (!s.allFinite()) return true;
  return std::abs(s(0)) > 50.0 || std::abs(s(1)) > 50.0 || std::abs(s(2)) > 10.0 || std::abs(s(3)) > 10.0;
}

std::vector<std::string> PointMass2d::reward_names() const {
  return {"forward", "angle-30", "angle-45", "angle-60", "angle-90"};
}

Vec PointMass2d::initial_state(Rng& rng) const {
  std::normal_distribution<double> jitter(0.0, 0.1);
  Vec s = Vec::Zero(4);
  s(0) = jitter(rng);
  s(1) = jitter(rng);
  return s;
}

RewardFn PointMass2d::make_reward(const std::string& reward_name) const {
  double theta = 0.0;
  if (reward_name != "forward") {
    const auto angle = parse_angle_reward(reward_name);
    if (!angle) throw std::invalid_argument("unknown pointmass-2d reward: " + reward_name);
    theta = *angle;
  }
  const double c = std::cos(theta);
  const double s = reward_name == "forward" ? 0.0 : std::sin(theta);
  return [c, s](const Vec&, const Vec& a, const Vec& s2) {
    return saturate(s2(2), kVelocityCap) * c + saturate(s2(3), kVelocityCap) * s - kControlCost * a.squaredNorm();
  };
}

// ---------------------------------------------------------------------- hill

PointMassHill::PointMassHill(double noise_std) : ToyEnv("pointmass-hill", 2, 1, 100, noise_std) {}

Vec PointMassHill::mean_next_state(const Vec& s, const Vec& a) const {
  const double slope = 1.35 * std::cos(3.0 * s(0));
  double v = s(1) + kDt * (std::clamp(a(0), -1.0, 1.0) - kGravity * slope);
  v = std::clamp(v, -kMaxSpeed, kMaxSpeed);
  double x = s(0) + kDt * v;
  if (x < kMinX) {
    x = kMinX;
    v = 0.0;
  }
  Vec out(2);
  out << x, v;
  return out;
}

bool PointMassHill::is_terminal(const Vec& s) const { return !s.allFinite() || s(0) >= kMaxX || std::abs(s(1)) > 10.0; }

Vec PointMassHill::initial_state(Rng& rng) const {
  Vec s(2);
  s << std::uniform_real_distribution<double>(-0.6, -0.4)(rng), 0.0;
  return s;
}

RewardFn PointMassHill::make_reward(const std::string& reward_name) const {
  if (reward_name == "run") {
    return [](const Vec&, const Vec& a, const Vec& s2) { return saturate(s2(1), 3.0) - kControlCost * a.squaredNorm(); };
  }
  if (reward_name == "climb") {
    const double base = height(kValleyX);
    return [base](const Vec&, const Vec& a, const Vec& s2) {
      return saturate(s2(1), 3.0) - kControlCost * a.squaredNorm() + 15.0 * (height(s2(0)) - base);
    };
  }
  throw std::invalid_argument("unknown pointmass-hill reward: " + reward_name);
}

// ----------------------------------------------------------------- gridworld

GridworldCliff::GridworldCliff() : ToyEnv("gridworld-cliff", 2, 2, 100, 0.0) {}

int GridworldCliff::discrete_action(const Vec& a) {
  if (std::abs(a(0)) >= std::abs(a(1))) return a(0) >= 0.0 ? right : left;
  return a(1) >= 0.0 ? up : down;
}

namespace {

std::pair<int, int> grid_move(int row, int col, int move) {
  switch (move) {
    case GridworldCliff::up: row = std::min(row + 1, GridworldCliff::kRows - 1); break;
    case GridworldCliff::down: row = std::max(row - 1, 0); break;
    case GridworldCliff::right: col = std::min(col + 1, GridworldCliff::kCols - 1); break;
    default: col = std::max(col - 1, 0); break;
  }
  return {row, col};
}

}  // namespace

Vec GridworldCliff::mean_next_state(const Vec& s, const Vec& a) const {
  const int row = static_cast<int>(std::lround(s(0)));
  const int col = static_cast<int>(std::lround(s(1)));
  auto [r2, c2] = grid_move(row, col, discrete_action(a));
  if (is_cliff(r2, c2)) r2 = c2 = 0;
  Vec out(2);
  out << r2, c2;
  return out;
}

bool GridworldCliff::is_terminal(const Vec& s) const {
  return !s.allFinite() || is_goal(static_cast<int>(std::lround(s(0))), static_cast<int>(std::lround(s(1))));
}

Vec GridworldCliff::initial_state(Rng&) const { return Vec::Zero(2); }

RewardFn GridworldCliff::make_reward(const std::string& reward_name) const {
  if (reward_name != "cliff") throw std::invalid_argument("unknown gridworld-cliff reward: " + reward_name);
  return [](const Vec& s, const Vec& a, const Vec&) {
    const int row = static_cast<int>(std::lround(s(0)));
    const int col = static_cast<int>(std::lround(s(1)));
    const auto [r2, c2] = grid_move(row, col, discrete_action(a));
    return is_cliff(r2, c2) ? -100.0 : -1.0;
  };
}

std::vector<std::pair<int, int>> GridworldCliff::reachable_cells() {
  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < kRows; ++r)
    for (int c = 0; c < kCols; ++c)
      if (!is_cliff(r, c)) cells.emplace_back(r, c);
  return cells;
}

TabularMdp GridworldCliff::to_tabular_mdp(double discount) {
  const auto cells = reachable_cells();
  const std::size_t S = cells.size();
  const std::size_t A = 4;
  auto index_of = [&](int r, int c) {
    for (std::size_t i = 0; i < S; ++i)
      if (cells[i].first == r && cells[i].second == c) return i;
    throw std::logic_error("cell is not reachable");
  };
  Mat t = Mat::Zero(static_cast<Eigen::Index>(S * A), static_cast<Eigen::Index>(S));
  Mat rew = Mat::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(A));
  for (std::size_t i = 0; i < S; ++i) {
    const auto [r, c] = cells[i];
    for (std::size_t m = 0; m < A; ++m) {
      const auto row = static_cast<Eigen::Index>(i * A + m);
      if (is_goal(r, c)) {
        t(row, static_cast<Eigen::Index>(i)) = 1.0;
        continue;
      }
      auto [r2, c2] = grid_move(r, c, static_cast<int>(m));
      const bool fell = is_cliff(r2, c2);
      if (fell) r2 = c2 = 0;
      t(row, static_cast<Eigen::Index>(index_of(r2, c2))) = 1.0;
      rew(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = fell ? -100.0 : -1.0;
    }
  }
  Vec mu = Vec::Zero(static_cast<Eigen::Index>(S));
  mu(static_cast<Eigen::Index>(index_of(0, 0))) = 1.0;
  return TabularMdp(S, A, t, rew, mu, discount);
}

// ------------------------------------------------------------------ registry

std::vector<std::string> env_names() { return {"gridworld-cliff", "pointmass-2d", "pointmass-hill"}; }

std::unique_ptr<ToyEnv> make_env(const std::string& name) {
  std::unique_ptr<ToyEnv> env;
  if (name == "pointmass-2d") env = std::make_unique<PointMass2d>();
  else if (name == "pointmass-hill") env = std::make_unique<PointMassHill>();
  else if (name == "gridworld-cliff") env = std::make_unique<GridworldCliff>();
  else throw std::invalid_argument("unknown environment: " + name);
  env->set_reward(env->default_reward());
  return env;
}

RewardFn reward_function(const std::string& env_name, const std::string& reward_name) {
  auto env = make_env(env_name);
  env->set_reward(reward_name);
  std::shared_ptr<ToyEnv> keep(std::move(env));
  return [keep](const Vec& s, const Vec& a, const Vec& s2) { return keep->reward(s, a, s2); };
}

TerminationFn termination_function(const std::string& env_name) {
  std::shared_ptr<ToyEnv> keep(make_env(env_name));
  return [keep](const Vec& s2) { return keep->is_terminal(s2); };
}

TrueNextState true_dynamics(const std::string& env_name) {
  std::shared_ptr<ToyEnv> keep(make_env(env_name));
  return [keep](const Mat& states, const Mat& actions) {
    if (states.cols() != actions.cols()) throw std::invalid_argument("state and action counts differ");
    Mat out(states.rows(), states.cols());
    for (Eigen::Index c = 0; c < states.cols(); ++c) out.col(c) = keep->mean_next_state(states.col(c), actions.col(c));
    return out;
  };
}

ActionPolicy uniform_random_policy(int action_dim) {
  return [action_dim](const Vec&, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec a(action_dim);
    for (int k = 0; k < action_dim; ++k) a(k) = u(rng);
    return a;
  };
}

ActionPolicy scripted_expert(const std::string& env_name, const std::string& reward_name) {
  if (env_name == "pointmass-2d") {
    double theta = 0.0;
    if (reward_name != "forward") {
      const auto angle = parse_angle_reward(reward_name);
      if (!angle) throw std::invalid_argument("no scripted expert for reward " + reward_name);
      theta = *angle;
    }
    Vec a(2);
    a << std::cos(theta), std::sin(theta);
    return [a](const Vec&, Rng&) { return a; };
  }
  if (env_name == "pointmass-hill") {
    // Pump: push with the velocity, and push right from rest.
    return [](const Vec& s, Rng&) { return Vec::Constant(1, s(1) >= 0.0 ? 1.0 : -1.0); };
  }
  if (env_name == "gridworld-cliff") {
    return [](const Vec& s, Rng&) {
      const int row = static_cast<int>(std::lround(s(0)));
      const int col = static_cast<int>(std::lround(s(1)));
      Vec a = Vec::Zero(2);
      if (col == GridworldCliff::kCols - 1) a(1) = -1.0;
      else if (row == 0) a(1) = 1.0;
      else if (row == 1) a(0) = 1.0;
      else a(1) = -1.0;
      return a;
    };
  }
  throw std::invalid_argument("unknown environment: " + env_name);
}

EpisodeStats run_episodes(const ToyEnv& prototype, const std::string& reward_name, const ActionPolicy& policy,
                          int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("need at least one episode");
  auto env = prototype.clone();
  env->set_reward(reward_name);
  EpisodeStats stats;
  for (int ep = 0; ep < n_episodes; ++ep) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(ep)));
    Vec s = env->reset(rng);
    double total = 0.0;
    while (true) {
      const auto out = env->step(policy(s, rng), rng);
      total += out.reward;
      s = out.next_state;
      if (out.terminal || out.truncated) break;
    }
    stats.returns.push_back(total);
  }
  const Vec r = to_vec(stats.returns);
  stats.mean = r.mean();
  stats.std = n_episodes > 1 ? std::sqrt((r.array() - stats.mean).square().sum() / (n_episodes - 1)) : 0.0;
  return stats;
}

}  // namespace mopo
