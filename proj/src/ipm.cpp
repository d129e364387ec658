#include "mopo/ipm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace mopo {

namespace {

constexpr double kWeightTol = 1e-12;
constexpr double kFlowEps = 1e-15;

void check_same_support(const FiniteDistribution& p, const FiniteDistribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("distributions must share a support of equal size");
}

/// Residual graph for successive-shortest-path min-cost flow with real capacities.
class FlowGraph {
 public:
  explicit FlowGraph(int nodes) : adjacency_(static_cast<std::size_t>(nodes)) {}

  void add_arc(int from, int to, double capacity, double cost) {
    adjacency_[static_cast<std::size_t>(from)].push_back(static_cast<int>(arcs_.size()));
    arcs_.push_back({to, capacity, cost});
    adjacency_[static_cast<std::size_t>(to)].push_back(static_cast<int>(arcs_.size()));
    arcs_.push_back({from, 0.0, -cost});
  }

  /// Sends up to `demand` units from source to sink; returns total cost.
  double min_cost_flow(int source, int sink, double demand) {
    const auto n = adjacency_.size();
    std::vector<double> potential(n, 0.0);
    std::vector<double> dist(n);
    std::vector<int> via(n);
    std::vector<char> done(n);
    double sent = 0.0;
    double total_cost = 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    while (sent < demand - kFlowEps) {
      std::fill(dist.begin(), dist.end(), inf);
      std::fill(via.begin(), via.end(), -1);
      std::fill(done.begin(), done.end(), 0);
      dist[static_cast<std::size_t>(source)] = 0.0;
      // Dense Dijkstra on reduced costs; graphs are complete bipartite so
      // the O(V^2) scan is the right shape.
      for (;;) {
        int u = -1;
        for (std::size_t v = 0; v < n; ++v) {
          if (!done[v] && dist[v] < inf && (u < 0 || dist[v] < dist[static_cast<std::size_t>(u)])) {
            u = static_cast<int>(v);
          }
        }
        if (u < 0) break;
        done[static_cast<std::size_t>(u)] = 1;
        for (int e : adjacency_[static_cast<std::size_t>(u)]) {
          const Arc& arc = arcs_[static_cast<std::size_t>(e)];
          if (arc.capacity <= kFlowEps) continue;
          const auto to = static_cast<std::size_t>(arc.to);
          const double reduced =
              std::max(0.0, arc.cost + potential[static_cast<std::size_t>(u)] - potential[to]);
          const double candidate = dist[static_cast<std::size_t>(u)] + reduced;
          if (candidate < dist[to]) {
            dist[to] = candidate;
            via[to] = e;
          }
        }
      }
      if (dist[static_cast<std::size_t>(sink)] == inf) break;
      double max_finite = 0.0;
      for (double d : dist)
        if (d < inf) max_finite = std::max(max_finite, d);
      for (std::size_t v = 0; v < n; ++v) potential[v] += dist[v] < inf ? dist[v] : max_finite;

      double bottleneck = demand - sent;
      for (int v = sink; v != source;) {
        const Arc& arc = arcs_[static_cast<std::size_t>(via[static_cast<std::size_t>(v)])];
        bottleneck = std::min(bottleneck, arc.capacity);
        v = arcs_[static_cast<std::size_t>(via[static_cast<std::size_t>(v)] ^ 1)].to;
      }
      for (int v = sink; v != source;) {
        const int e = via[static_cast<std::size_t>(v)];
        arcs_[static_cast<std::size_t>(e)].capacity -= bottleneck;
        arcs_[static_cast<std::size_t>(e ^ 1)].capacity += bottleneck;
        total_cost += bottleneck * arcs_[static_cast<std::size_t>(e)].cost;
        v = arcs_[static_cast<std::size_t>(e ^ 1)].to;
      }
      sent += bottleneck;
    }
    return total_cost;
  }

 private:
  struct Arc {
    int to;
    double capacity;
    double cost;
  };
  std::vector<std::vector<int>> adjacency_;
  std::vector<Arc> arcs_;
};

FiniteDistribution row_distribution(const TabularMdp& mdp, std::size_t s, std::size_t a) {
  return FiniteDistribution(mdp.next_dist(s, a));
}

}  // namespace

FiniteDistribution::FiniteDistribution(Vec w, std::optional<Mat> c) : weights(std::move(w)), coords(std::move(c)) {
  if (weights.size() == 0) throw std::invalid_argument("empty distribution");
  if (!weights.allFinite() || (weights.array() < 0.0).any()) {
    throw std::invalid_argument("distribution weights must be finite and nonnegative");
  }
  if (std::abs(weights.sum() - 1.0) > kWeightTol) throw std::invalid_argument("distribution weights must sum to 1");
  if (coords && coords->rows() != weights.size()) throw std::invalid_argument("one coordinate row per support point");
}

IpmChoice::IpmChoice(IpmKind k, double c, std::string desc) : kind(k), constant_c(c), description(std::move(desc)) {
  if (!(c > 0.0)) throw std::invalid_argument("IPM constant must be positive");
}

std::string to_string(IpmKind kind) {
  switch (kind) {
    case IpmKind::total_variation:
      return "total-variation";
    case IpmKind::wasserstein1:
      return "wasserstein-1";
    case IpmKind::mmd:
      return "mmd";
  }
  throw std::invalid_argument("unknown IPM kind");
}

IpmKind ipm_kind_from_string(const std::string& name) {
  if (name == "total-variation") return IpmKind::total_variation;
  if (name == "wasserstein-1") return IpmKind::wasserstein1;
  if (name == "mmd") return IpmKind::mmd;
  throw std::invalid_argument("unknown IPM kind: " + name);
}

double tv_distance(const FiniteDistribution& p, const FiniteDistribution& q) {
  check_same_support(p, q);
  return 0.5 * (p.weights - q.weights).cwiseAbs().sum();
}

double wasserstein1(const FiniteDistribution& p, const FiniteDistribution& q, const Mat& cost) {
  check_same_support(p, q);
  const Eigen::Index n = p.size();
  if (cost.rows() != cost.cols()) throw std::invalid_argument("cost matrix must be square");
  if (cost.rows() != n) throw std::invalid_argument("cost matrix size must match the support");
  if (!cost.allFinite() || (cost.array() < 0.0).any()) {
    throw std::invalid_argument("cost matrix entries must be finite and nonnegative");
  }
  const int nn = static_cast<int>(n);
  const int source = 2 * nn;
  const int sink = 2 * nn + 1;
  FlowGraph graph(2 * nn + 2);
  for (int i = 0; i < nn; ++i) {
    if (p.weights(i) > 0.0) graph.add_arc(source, i, p.weights(i), 0.0);
    if (q.weights(i) > 0.0) graph.add_arc(nn + i, sink, q.weights(i), 0.0);
  }
  for (int i = 0; i < nn; ++i) {
    if (p.weights(i) <= 0.0) continue;
    for (int j = 0; j < nn; ++j) {
      if (q.weights(j) > 0.0) graph.add_arc(i, nn + j, 2.0, cost(i, j));
    }
  }
  const double demand = std::min(p.weights.sum(), q.weights.sum());
  return std::max(0.0, graph.min_cost_flow(source, sink, demand));
}

double wasserstein1_1d(const FiniteDistribution& p, const FiniteDistribution& q, const Vec& points) {
  check_same_support(p, q);
  if (points.size() != p.size()) throw std::invalid_argument("one coordinate per support point");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return points(a) < points(b); });
  double cdf_gap = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    cdf_gap += p.weights(order[k]) - q.weights(order[k]);
    total += std::abs(cdf_gap) * (points(order[k + 1]) - points(order[k]));
  }
  return total;
}

double mmd(const FiniteDistribution& p, const FiniteDistribution& q, const Mat& kernel) {
  check_same_support(p, q);
  if (kernel.rows() != p.size() || kernel.cols() != p.size()) {
    throw std::invalid_argument("kernel must be square with one row per support point");
  }
  const Vec diff = p.weights - q.weights;
  const double squared = diff.dot(kernel * diff);
  return std::sqrt(std::max(0.0, squared));
}

Mat euclidean_cost(const Mat& coords) {
  const Eigen::Index n = coords.rows();
  Mat cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (coords.row(i) - coords.row(j)).norm();
  return cost;
}

Mat gaussian_gram(const Mat& coords, double bandwidth) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  const Eigen::Index n = coords.rows();
  Mat k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      k(i, j) = std::exp(-(coords.row(i) - coords.row(j)).squaredNorm() / (2.0 * bandwidth * bandwidth));
  return k;
}

double gap_bound(const TabularMdp& true_mdp, const TabularMdp& model_mdp, const IpmChoice& choice, std::size_t s,
                 std::size_t a, const Mat* metric) {
  if (true_mdp.n_states() != model_mdp.n_states() || true_mdp.n_actions() != model_mdp.n_actions()) {
    throw std::invalid_argument("true and model MDP shapes differ");
  }
  const FiniteDistribution model_row = row_distribution(model_mdp, s, a);
  const FiniteDistribution true_row = row_distribution(true_mdp, s, a);
  switch (choice.kind) {
    case IpmKind::total_variation:
      return true_mdp.r_max() / (1.0 - true_mdp.discount()) * tv_distance(model_row, true_row);
    case IpmKind::wasserstein1:
      if (metric == nullptr) throw std::invalid_argument("wasserstein-1 bound needs a state-space cost matrix");
      return choice.constant_c * wasserstein1(model_row, true_row, *metric);
    case IpmKind::mmd:
      if (metric == nullptr) throw std::invalid_argument("mmd bound needs a kernel Gram matrix");
      return choice.constant_c * mmd(model_row, true_row, *metric);
  }
  throw std::invalid_argument("unknown IPM kind");
}

double value_lipschitz_constant(const Vec& values, const Mat& cost) {
  if (cost.rows() != values.size() || cost.cols() != values.size()) throw std::invalid_argument("shape mismatch");
  double lip = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    for (Eigen::Index j = 0; j < values.size(); ++j) {
      if (cost(i, j) > 0.0) lip = std::max(lip, std::abs(values(i) - values(j)) / cost(i, j));
    }
  }
  return lip;
}

double rkhs_interpolation_norm(const Vec& values, const Mat& kernel) {
  Eigen::LDLT<Mat> ldlt(kernel);
  if (ldlt.info() != Eigen::Success) throw NumericalError("Gram matrix factorization failed");
  const Vec coeffs = ldlt.solve(values);
  return std::sqrt(std::max(0.0, values.dot(coeffs)));
}

}  // namespace mopo
