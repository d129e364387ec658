#pragma once

#include "mopo/mopo.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mopo {

/// Ablation arms. Documented mapping to the published rows lives in docs/ablation_arms.md.
///   max-std       MOPO
///   disagreement  MOPO, ens. pen.
///   mean-std      MOPO, avg. var.
///   no-pen        MOPO, no pen. (MBPO): lambda = 0
///   no-ens        MBPO, no ens.: one model, lambda = 0
///   oracle        MOPO, true pen.
std::vector<std::string> ablation_arms();

/// Applies the arm to a base config. Penalized arms keep the base lambda.
MopoConfig arm_config(const std::string& arm, const MopoConfig& base);

/// Workers for parallel runs: MOPO_KIT_THREADS when set (>= 1), otherwise
/// the hardware concurrency.
std::size_t worker_count();

/// Runs `jobs` on at most `workers` threads. Exceptions are captured per job.
std::vector<std::string> run_jobs(const std::vector<std::function<void()>>& jobs, std::size_t workers);

struct RunSpec {
  std::string arm;
  std::uint64_t seed = 0;
  MopoConfig config;
};

struct RunOutcome {
  std::string arm;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double final_return_mean = 0.0;
  double final_return_std = 0.0;
  std::optional<double> normalized;
  std::vector<MetricRow> history;
};

struct GridInputs {
  const TransitionDataset* dataset = nullptr;  // already relabeled to the target reward
  const ToyEnv* env = nullptr;                 // prototype for the evaluator only
  std::string reward;
  int eval_episodes = 10;
  std::size_t workers = 1;
  /// Called after each finished run (from worker threads, serialized).
  std::function<void(const RunOutcome&)> on_done;
};

/// Evaluation seed shared by all arms that use the same run seed.
std::uint64_t evaluation_seed(std::uint64_t run_seed);

/// Runs every run spec. Ensembles are trained once per (seed, ensemble shape)
/// and shared by the arms that need them. Results are in input order.
std::vector<RunOutcome> run_grid(const std::vector<RunSpec>& specs, const GridInputs& in);

struct ArmSummary {
  std::string arm;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over seeds
  std::optional<double> normalized_mean;
};

std::vector<ArmSummary> summarize(const std::vector<RunOutcome>& runs, const std::vector<std::string>& arm_order);

void write_runs_csv(const std::vector<RunOutcome>& runs, std::ostream& out);
void write_summary_csv(const std::vector<ArmSummary>& rows, std::ostream& out);
/// Fixed-width table of mean +- std per arm; arms without results show "--".
std::string render_table(const std::vector<ArmSummary>& rows, const std::string& title);

}  // namespace mopo
