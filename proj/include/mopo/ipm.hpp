#pragma once

#include "mopo/mdp.hpp"

#include <optional>
#include <string>

namespace mopo {

/// Probability weights over an indexed support. `coords` is optional
/// (one row per support point) and only used to build metric cost matrices.
struct FiniteDistribution {
  Vec weights;
  std::optional<Mat> coords;

  explicit FiniteDistribution(Vec w, std::optional<Mat> c = std::nullopt);
  Eigen::Index size() const { return weights.size(); }
};

enum class IpmKind { total_variation, wasserstein1, mmd };

/// Function-class tag F together with the scale c such that V in cF.
struct IpmChoice {
  IpmKind kind;
  double constant_c;
  std::string description;

  IpmChoice(IpmKind k, double c, std::string desc = {});
};

std::string to_string(IpmKind kind);
IpmKind ipm_kind_from_string(const std::string& name);

/// Half the L1 distance.
double tv_distance(const FiniteDistribution& p, const FiniteDistribution& q);

/// Exact optimal transport cost for a shared support of size n and an n x n
/// cost matrix, solved as a min-cost flow by successive shortest paths.
double wasserstein1(const FiniteDistribution& p, const FiniteDistribution& q, const Mat& cost);

/// Closed form for 1-D supports: integral of |F_p - F_q| over the real line.
/// `points` holds the coordinate of each support index (any order).
double wasserstein1_1d(const FiniteDistribution& p, const FiniteDistribution& q, const Vec& points);

/// Biased (V-statistic) MMD with a caller-supplied Gram matrix on the support.
double mmd(const FiniteDistribution& p, const FiniteDistribution& q, const Mat& kernel);

/// Pairwise Euclidean distances between coordinate rows.
Mat euclidean_cost(const Mat& coords);

/// Gaussian Gram matrix exp(-|x - y|^2 / (2 bandwidth^2)).
Mat gaussian_gram(const Mat& coords, double bandwidth);

/// c * d_F(T_model(s,a), T_true(s,a)). For total variation the constant is
/// recomputed from the true MDP as r_max / (1 - gamma); for W1 and MMD the
/// choice's constant is used together with `metric` (cost or Gram matrix).
double gap_bound(const TabularMdp& true_mdp, const TabularMdp& model_mdp, const IpmChoice& choice, std::size_t s,
                 std::size_t a, const Mat* metric = nullptr);

/// Smallest L with |V(i) - V(j)| <= L cost(i, j) over all pairs with positive cost.
double value_lipschitz_constant(const Vec& values, const Mat& cost);

/// Minimal RKHS norm of a function taking `values` on the support points,
/// sqrt(v^T K^{-1} v), for a positive definite Gram matrix.
double rkhs_interpolation_norm(const Vec& values, const Mat& kernel);

}  // namespace mopo
