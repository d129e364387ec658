#pragma once

#include "mopo/dataset.hpp"

#include <cmath>
#include <numbers>

namespace mopo::testing {

// s' = A s + B a + noise, r = w . s + noise; all noise std `sigma`.
inline TransitionDataset linear_fixture(std::size_t n, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Mat a_mat(2, 2);
  a_mat << 0.9, 0.1, -0.2, 0.8;
  Mat b_mat(2, 1);
  b_mat << 0.5, -0.3;
  Vec w(2);
  w << 1.0, -0.5;
  DatasetBuilder builder(2, 1);
  for (std::size_t i = 0; i < n; ++i) {
    Vec s(2), a(1);
    s << 2 * unif(rng), 2 * unif(rng);
    a << unif(rng);
    Vec s2 = a_mat * s + b_mat * a;
    for (Eigen::Index d = 0; d < 2; ++d) s2(d) += sigma * n01(rng);
    const double r = w.dot(s) + sigma * n01(rng);
    builder.add(s, a, r, s2, false);
  }
  DatasetMeta meta;
  meta.env_name = "linear-fixture";
  meta.seed = seed;
  return builder.build(meta);
}

// Differential entropy of an isotropic Gaussian with the given std in `dims` dimensions.
inline double gaussian_entropy(double sigma, int dims) {
  return dims * (0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e) + std::log(sigma));
}

}  // namespace mopo::testing
