#include "mopo/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mopo {

namespace {

constexpr double kStochasticTol = 1e-12;

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

void check_row_stochastic(const Mat& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entries");
  if ((m.array() < 0.0).any()) throw std::invalid_argument(std::string(what) + ": negative probability");
  for (Index r = 0; r < m.rows(); ++r) {
    if (std::abs(m.row(r).sum() - 1.0) > kStochasticTol) {
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

void check_dims(const TabularMdp& mdp, const TabularPolicy& policy) {
  if (mdp.n_states() != policy.n_states() || mdp.n_actions() != policy.n_actions()) {
    throw std::invalid_argument("policy dimensions do not match the MDP");
  }
}

void check_pair(const TabularMdp& true_mdp, const TabularMdp& model_mdp) {
  if (true_mdp.n_states() != model_mdp.n_states() || true_mdp.n_actions() != model_mdp.n_actions()) {
    throw std::invalid_argument("true and model MDP shapes differ");
  }
  if (!true_mdp.shares_reward_structure(model_mdp)) {
    throw std::invalid_argument("true and model MDP must share reward, initial distribution and discount");
  }
}

Mat solve_checked(const Mat& lhs, const Mat& rhs) {
  Eigen::PartialPivLU<Mat> lu(lhs);
  Mat x = lu.solve(rhs);
  if (!x.allFinite()) throw NumericalError("singular discounted linear system");
  return x;
}

}  // namespace

TabularMdp::TabularMdp(std::size_t n_states, std::size_t n_actions, Mat transition, Mat reward,
                       Vec initial_dist, double discount, std::optional<double> r_max)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      reward_(std::move(reward)),
      initial_dist_(std::move(initial_dist)),
      discount_(discount) {
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("MDP needs at least one state and action");
  if (transition_.rows() != idx(n_states * n_actions) || transition_.cols() != idx(n_states)) {
    throw std::invalid_argument("transition must be (S*A) x S");
  }
  if (reward_.rows() != idx(n_states) || reward_.cols() != idx(n_actions)) {
    throw std::invalid_argument("reward must be S x A");
  }
  if (initial_dist_.size() != idx(n_states)) throw std::invalid_argument("initial_dist must have S entries");
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("discount must lie strictly inside (0,1)");
  if (!reward_.allFinite()) throw std::invalid_argument("reward has non-finite entries");
  check_row_stochastic(transition_, "transition");
  check_row_stochastic(initial_dist_.transpose(), "initial_dist");
  const double observed = reward_.cwiseAbs().maxCoeff();
  r_max_ = r_max.value_or(observed);
  if (observed > r_max_) throw std::invalid_argument("reward magnitude exceeds r_max");
}

Vec TabularMdp::next_dist(std::size_t s, std::size_t a) const {
  return transition_.row(idx(s * n_actions_ + a)).transpose();
}

TabularMdp TabularMdp::with_transition(Mat transition) const {
  return TabularMdp(n_states_, n_actions_, std::move(transition), reward_, initial_dist_, discount_, r_max_);
}

TabularMdp TabularMdp::with_reward(Mat reward) const {
  const double bound = std::max(r_max_, reward.cwiseAbs().maxCoeff());
  return TabularMdp(n_states_, n_actions_, transition_, std::move(reward), initial_dist_, discount_, bound);
}

bool TabularMdp::shares_reward_structure(const TabularMdp& other) const {
  return n_states_ == other.n_states_ && n_actions_ == other.n_actions_ && discount_ == other.discount_ &&
         reward_ == other.reward_ && initial_dist_ == other.initial_dist_;
}

TabularPolicy::TabularPolicy(Mat probs) : probs_(std::move(probs)) {
  if (probs_.rows() == 0 || probs_.cols() == 0) throw std::invalid_argument("empty policy");
  check_row_stochastic(probs_, "policy");
}

TabularPolicy TabularPolicy::deterministic(const std::vector<std::size_t>& actions, std::size_t n_actions) {
  Mat probs = Mat::Zero(idx(actions.size()), idx(n_actions));
  for (std::size_t s = 0; s < actions.size(); ++s) {
    if (actions[s] >= n_actions) throw std::invalid_argument("action index out of range");
    probs(idx(s), idx(actions[s])) = 1.0;
  }
  return TabularPolicy(std::move(probs));
}

TabularPolicy TabularPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
  return TabularPolicy(Mat::Constant(idx(n_states), idx(n_actions), 1.0 / static_cast<double>(n_actions)));
}

std::size_t TabularPolicy::action(std::size_t s) const {
  Index best = 0;
  const double p = probs_.row(idx(s)).maxCoeff(&best);
  if (p != 1.0) throw std::logic_error("policy is not deterministic at state " + std::to_string(s));
  return static_cast<std::size_t>(best);
}

double OccupancyMeasure::expect(const Mat& f) const {
  if (f.rows() != rho.rows() || f.cols() != rho.cols()) throw std::invalid_argument("shape mismatch in expectation");
  return (rho.array() * f.array()).sum();
}

Mat policy_transition(const TabularMdp& mdp, const TabularPolicy& policy) {
  check_dims(mdp, policy);
  const auto n = mdp.n_states();
  const auto m = mdp.n_actions();
  Mat p = Mat::Zero(idx(n), idx(n));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t a = 0; a < m; ++a) {
      const double w = policy.probs()(idx(s), idx(a));
      if (w != 0.0) p.row(idx(s)) += w * mdp.transition().row(idx(s * m + a));
    }
  }
  return p;
}

Vec policy_reward(const TabularMdp& mdp, const TabularPolicy& policy) {
  check_dims(mdp, policy);
  return (mdp.reward().array() * policy.probs().array()).rowwise().sum();
}

Vec value_function(const TabularMdp& mdp, const TabularPolicy& policy) {
  const Mat p = policy_transition(mdp, policy);
  const Index n = p.rows();
  const Mat system = Mat::Identity(n, n) - mdp.discount() * p;
  return solve_checked(system, policy_reward(mdp, policy));
}

double expected_return(const TabularMdp& mdp, const TabularPolicy& policy) {
  return mdp.initial_dist().dot(value_function(mdp, policy));
}

OccupancyMeasure occupancy_measure(const TabularMdp& mdp, const TabularPolicy& policy) {
  const Mat p = policy_transition(mdp, policy);
  const Index n = p.rows();
  const Mat system = (Mat::Identity(n, n) - mdp.discount() * p).transpose();
  const Vec state_visits = solve_checked(system, mdp.initial_dist());
  OccupancyMeasure occ;
  occ.rho = policy.probs().array().colwise() * state_visits.array();
  return occ;
}

Mat model_gap_table(const TabularMdp& true_mdp, const TabularMdp& model_mdp, const TabularPolicy& policy) {
  check_pair(true_mdp, model_mdp);
  const Vec v = value_function(true_mdp, policy);
  const Vec diff = (model_mdp.transition() - true_mdp.transition()) * v;
  Mat g(idx(true_mdp.n_states()), idx(true_mdp.n_actions()));
  for (std::size_t s = 0; s < true_mdp.n_states(); ++s) {
    for (std::size_t a = 0; a < true_mdp.n_actions(); ++a) {
      g(idx(s), idx(a)) = diff(idx(s * true_mdp.n_actions() + a));
    }
  }
  return g;
}

double model_gap(const TabularMdp& true_mdp, const TabularMdp& model_mdp, const TabularPolicy& policy,
                 std::size_t s, std::size_t a) {
  check_pair(true_mdp, model_mdp);
  if (s >= true_mdp.n_states() || a >= true_mdp.n_actions()) throw std::out_of_range("state/action out of range");
  const Vec v = value_function(true_mdp, policy);
  const Index row = idx(s * true_mdp.n_actions() + a);
  return model_mdp.transition().row(row).dot(v) - true_mdp.transition().row(row).dot(v);
}

TelescopingSides telescoping_sides(const TabularMdp& true_mdp, const TabularMdp& model_mdp,
                                   const TabularPolicy& policy) {
  const Mat g = model_gap_table(true_mdp, model_mdp, policy);
  const OccupancyMeasure occ = occupancy_measure(model_mdp, policy);
  return {expected_return(model_mdp, policy) - expected_return(true_mdp, policy),
          true_mdp.discount() * occ.expect(g)};
}

Mat optimal_q_values(const TabularMdp& mdp, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const Index n = idx(mdp.n_states());
  const Index m = idx(mdp.n_actions());
  Vec v = Vec::Zero(n);
  Mat q(n, m);
  // Residual of the returned Q is bounded by the last sweep's change.
  for (;;) {
    const Vec next = mdp.transition() * v;
    for (Index s = 0; s < n; ++s) {
      for (Index a = 0; a < m; ++a) q(s, a) = mdp.reward()(s, a) + mdp.discount() * next(s * m + a);
    }
    const Vec updated = q.rowwise().maxCoeff();
    const double residual = (updated - v).cwiseAbs().maxCoeff();
    v = updated;
    if (residual <= tol) break;
  }
  return q;
}

TabularPolicy greedy_policy(const Mat& q) {
  std::vector<std::size_t> actions(static_cast<std::size_t>(q.rows()));
  for (Index s = 0; s < q.rows(); ++s) {
    Index best = 0;
    for (Index a = 1; a < q.cols(); ++a) {
      if (q(s, a) > q(s, best)) best = a;
    }
    actions[static_cast<std::size_t>(s)] = static_cast<std::size_t>(best);
  }
  return TabularPolicy::deterministic(actions, static_cast<std::size_t>(q.cols()));
}

TabularPolicy optimal_policy(const TabularMdp& mdp, double tol) { return greedy_policy(optimal_q_values(mdp, tol)); }

std::optional<std::size_t> count_deterministic_policies(std::size_t n_states, std::size_t n_actions,
                                                        std::size_t cap) {
  std::size_t count = 1;
  for (std::size_t s = 0; s < n_states; ++s) {
    if (count > cap / n_actions) return std::nullopt;
    count *= n_actions;
  }
  if (count > cap) return std::nullopt;
  return count;
}

TabularPolicy deterministic_policy_at(std::size_t index, std::size_t n_states, std::size_t n_actions) {
  std::vector<std::size_t> actions(n_states);
  for (std::size_t s = 0; s < n_states; ++s) {
    actions[s] = index % n_actions;
    index /= n_actions;
  }
  return TabularPolicy::deterministic(actions, n_actions);
}

void to_json(nlohmann::json& j, const TabularMdp& mdp) {
  const auto n = mdp.n_states();
  const auto m = mdp.n_actions();
  nlohmann::json transition = nlohmann::json::array();
  nlohmann::json reward = nlohmann::json::array();
  for (std::size_t s = 0; s < n; ++s) {
    nlohmann::json per_action = nlohmann::json::array();
    nlohmann::json reward_row = nlohmann::json::array();
    for (std::size_t a = 0; a < m; ++a) {
      std::vector<double> row(n);
      for (std::size_t t = 0; t < n; ++t) row[t] = mdp.probability(s, a, t);
      per_action.push_back(row);
      reward_row.push_back(mdp.reward()(idx(s), idx(a)));
    }
    transition.push_back(std::move(per_action));
    reward.push_back(std::move(reward_row));
  }
  std::vector<double> mu(mdp.initial_dist().data(), mdp.initial_dist().data() + n);
  j = nlohmann::json{{"n_states", n},          {"n_actions", m},        {"transition", transition},
                     {"reward", reward},       {"initial_dist", mu},    {"discount", mdp.discount()}};
  if (mdp.r_max() != mdp.reward().cwiseAbs().maxCoeff()) j["r_max"] = mdp.r_max();
}

TabularMdp tabular_mdp_from_json(const nlohmann::json& j) {
  const auto n = j.at("n_states").get<std::size_t>();
  const auto m = j.at("n_actions").get<std::size_t>();
  const auto& tr = j.at("transition");
  const auto& rw = j.at("reward");
  if (tr.size() != n || rw.size() != n) throw std::invalid_argument("transition/reward outer size must be n_states");
  Mat transition(idx(n * m), idx(n));
  Mat reward(idx(n), idx(m));
  for (std::size_t s = 0; s < n; ++s) {
    if (tr[s].size() != m || rw[s].size() != m) throw std::invalid_argument("inner size must be n_actions");
    for (std::size_t a = 0; a < m; ++a) {
      if (tr[s][a].size() != n) throw std::invalid_argument("next-state rows must have n_states entries");
      for (std::size_t t = 0; t < n; ++t) transition(idx(s * m + a), idx(t)) = tr[s][a][t].get<double>();
      reward(idx(s), idx(a)) = rw[s][a].get<double>();
    }
  }
  const auto mu = j.at("initial_dist").get<std::vector<double>>();
  if (mu.size() != n) throw std::invalid_argument("initial_dist must have n_states entries");
  std::optional<double> r_max;
  if (j.contains("r_max")) r_max = j.at("r_max").get<double>();
  return TabularMdp(n, m, std::move(transition), std::move(reward), to_vec(mu), j.at("discount").get<double>(),
                    r_max);
}

}  // namespace mopo
