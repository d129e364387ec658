#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace mopo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Raised when a numerical routine produces non-finite values or otherwise
/// cannot continue (divergent training, singular solves).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Derives an independent seed from a parent seed and a stream index
/// (splitmix64 finalizer). Used to pre-split random streams per rollout,
/// per ensemble member and per harness instance.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  std::uint64_t z = parent + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Vec to_vec(std::span<const double> xs) {
  return Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

void log_warning(const std::string& message);
void log_info(const std::string& message);

}  // namespace mopo
