#pragma once

#include "mopo/planner.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace mopo {

/// One named check aggregated over a suite. `worst_slack` is the minimum raw
/// slack; a check passes when every slack is >= -tolerance.
struct CheckResult {
  std::string name;
  bool passed = true;
  double worst_slack = 0.0;
  std::string location;  // where the worst slack occurred; replay info included
  std::uint64_t worst_instance_seed = 0;
  std::size_t n_evaluated = 0;
  std::size_t n_failed = 0;
};

struct HarnessReport {
  std::string suite;
  nlohmann::json parameters;
  std::vector<CheckResult> checks;
  std::vector<std::string> notes;
  double wall_seconds = 0.0;

  bool passed() const;
  const CheckResult& check(const std::string& name) const;
};

struct SizeCaps {
  std::size_t max_states = 10;
  std::size_t max_actions = 4;
  double gamma_min = 0.5;
  double gamma_max = 0.99;
};

/// A random (M, M_hat, pi) triple; fully determined by `seed`.
struct LemmaInstance {
  TabularMdp truth;
  TabularMdp model;
  TabularPolicy policy;
};

LemmaInstance lemma_instance(std::uint64_t seed, const SizeCaps& caps, bool identical_model, bool force_high_gamma);

/// Smallest horizon >= 200 for which the reconstruction tail is below 1e-9.
int reconstruction_horizon(double gamma, double r_max);

/// sum_{j<H} (W_{j+1} - W_j), where W_j runs j steps under the model and
/// then continues under the true dynamics.
double hybrid_reconstruction(const TabularMdp& truth, const TabularMdp& model, const TabularPolicy& policy, int horizon);

HarnessReport run_lemma_suite(std::size_t n_instances, const SizeCaps& caps, std::uint64_t seed);

struct BoundSuiteOptions {
  std::size_t policies_per_instance = 8;
  std::size_t max_states = 8;
  std::size_t max_actions = 3;
  double lambda_scale = 10.0;  // the inflated-lambda variant
};

HarnessReport run_bound_suite(std::size_t n_instances, std::uint64_t seed, const BoundSuiteOptions& options = {});

/// The four-state fixture where the model promises a rewarding loop behind an
/// action that really leads to an absorbing penalty state.
struct AdversarialFixture {
  TabularMdp truth;
  TabularMdp model;
};
AdversarialFixture adversarial_fixture();

HarnessReport run_theorem_suite(std::size_t n_instances, std::uint64_t seed, std::size_t n_states = 3,
                                std::size_t n_actions = 2);

nlohmann::json to_json(const HarnessReport& report);
std::string to_text(const HarnessReport& report);

}  // namespace mopo
