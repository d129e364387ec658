#include "mopo/experiments.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace mopo {

std::vector<std::string> ablation_arms() {
  return {"max-std", "disagreement", "mean-std", "no-pen", "no-ens", "oracle"};
}

MopoConfig arm_config(const std::string& arm, const MopoConfig& base) {
  MopoConfig c = base;
  if (arm == "max-std") c.penalty = PenaltyKind::max_std;
  else if (arm == "disagreement") c.penalty = PenaltyKind::disagreement;
  else if (arm == "mean-std") c.penalty = PenaltyKind::mean_std;
  else if (arm == "oracle") c.penalty = PenaltyKind::oracle;
  else if (arm == "no-pen" || arm == "no-ens") {
    c.penalty = PenaltyKind::none;
    c.penalty_coeff = 0.0;
    if (arm == "no-ens") c.ensemble_size = c.elites = 1;
  } else {
    throw std::invalid_argument("unknown ablation arm: " + arm);
  }
  return c;
}

std::size_t worker_count() {
  if (const char* env = std::getenv("MOPO_KIT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<std::size_t>(n);
    log_warning("ignoring invalid MOPO_KIT_THREADS=" + std::string(env));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<std::string> run_jobs(const std::vector<std::function<void()>>& jobs, std::size_t workers) {
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        jobs[i]();
      } catch (const std::exception& e) {
        errors[i] = e.what();
        if (errors[i].empty()) errors[i] = "unknown error";
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, jobs.size()));
  if (n == 1) {
    loop();
    return errors;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
  return errors;
}

std::uint64_t evaluation_seed(std::uint64_t run_seed) { return derive_seed(run_seed, 0xe7a1ULL); }

namespace {

struct EnsembleKey {
  std::uint64_t seed;
  std::size_t size;
  std::size_t elites;
  std::string dynamics;
  bool operator<(const EnsembleKey& o) const {
    return std::tie(seed, size, elites, dynamics) < std::tie(o.seed, o.size, o.elites, o.dynamics);
  }
};

EnsembleKey key_of(const RunSpec& s) {
  return {s.config.seed, s.config.ensemble_size, s.config.elites, to_json(s.config.dynamics).dump()};
}

}  // namespace

std::vector<RunOutcome> run_grid(const std::vector<RunSpec>& specs, const GridInputs& in) {
  if (!in.dataset || !in.env) throw std::invalid_argument("run_grid needs a dataset and an env");
  const TransitionDataset& data = *in.dataset;
  const TrueNextState oracle = true_dynamics(data.meta().env_name);
  const std::string task = task_key(in.env->name(), in.reward);

  std::map<EnsembleKey, std::shared_ptr<const GaussianDynamicsEnsemble>> ensembles;
  std::map<EnsembleKey, const RunSpec*> first;
  for (const auto& s : specs) {
    if (s.config.seed != s.seed) throw std::invalid_argument("run spec seed and config seed differ");
    first.emplace(key_of(s), &s);
  }
  std::vector<EnsembleKey> keys;
  for (const auto& [k, s] : first) keys.push_back(k);
  std::vector<std::shared_ptr<const GaussianDynamicsEnsemble>> trained(keys.size());
  std::vector<std::function<void()>> model_jobs;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    model_jobs.emplace_back([&, i] { trained[i] = train_run_ensemble(first.at(keys[i])->config, data); });
  }
  const auto model_errors = run_jobs(model_jobs, in.workers);
  std::map<EnsembleKey, std::string> ensemble_error;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (model_errors[i].empty()) ensembles[keys[i]] = trained[i];
    else ensemble_error[keys[i]] = "ensemble training failed: " + model_errors[i];
  }

  std::vector<RunOutcome> out(specs.size());
  std::mutex done_mutex;
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    jobs.emplace_back([&, i] {
      const RunSpec& s = specs[i];
      RunOutcome& o = out[i];
      o.arm = s.arm;
      o.seed = s.seed;
      const auto k = key_of(s);
      if (auto it = ensemble_error.find(k); it != ensemble_error.end()) {
        o.error = it->second;
      } else {
        try {
          const PolicyEvaluator evaluator(*in.env, in.reward, in.eval_episodes, evaluation_seed(s.seed));
          const auto res = mopo_train(s.config, data, evaluator, ensembles.at(k), oracle);
          o.ok = true;
          o.final_return_mean = res.final_return_mean;
          o.final_return_std = res.final_return_std;
          o.history = res.history;
          if (AnchorTable::builtin().contains(task)) o.normalized = normalized_score(task, o.final_return_mean);
        } catch (const std::exception& e) {
          o.error = e.what();
        }
      }
      if (in.on_done) {
        std::lock_guard<std::mutex> lock(done_mutex);
        in.on_done(o);
      }
    });
  }
  run_jobs(jobs, in.workers);
  return out;
}

std::vector<ArmSummary> summarize(const std::vector<RunOutcome>& runs, const std::vector<std::string>& arm_order) {
  std::vector<ArmSummary> rows;
  for (const auto& arm : arm_order) {
    ArmSummary s;
    s.arm = arm;
    std::vector<double> xs, norm;
    for (const auto& r : runs) {
      if (r.arm != arm) continue;
      if (!r.ok) {
        ++s.n_failed;
        continue;
      }
      xs.push_back(r.final_return_mean);
      if (r.normalized) norm.push_back(*r.normalized);
    }
    s.n_ok = xs.size();
    if (!xs.empty()) {
      const Vec v = to_vec(xs);
      s.mean = v.mean();
      s.std = xs.size() > 1 ? std::sqrt((v.array() - s.mean).square().sum() / static_cast<double>(xs.size() - 1)) : 0.0;
      if (norm.size() == xs.size()) s.normalized_mean = to_vec(norm).mean();
    }
    rows.push_back(s);
  }
  return rows;
}

namespace {

std::string csv_escape(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else if (c == '\n') out += ' ';
    else out += c;
  }
  return out + "\"";
}

}  // namespace

void write_runs_csv(const std::vector<RunOutcome>& runs, std::ostream& out) {
  out << "arm,seed,status,final_return_mean,final_return_std,normalized_score,error\n";
  out << std::setprecision(10);
  for (const auto& r : runs) {
    out << r.arm << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) out << r.final_return_mean << ',' << r.final_return_std << ',';
    else out << ",,";
    if (r.normalized) out << *r.normalized;
    out << ',' << (r.error.empty() ? "" : csv_escape(r.error)) << '\n';
  }
}

void write_summary_csv(const std::vector<ArmSummary>& rows, std::ostream& out) {
  out << "arm,n_ok,n_failed,mean_return,std_return,normalized_mean\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.arm << ',' << r.n_ok << ',' << r.n_failed << ',';
    if (r.n_ok > 0) out << r.mean << ',' << r.std << ',';
    else out << ",,";
    if (r.normalized_mean) out << *r.normalized_mean;
    out << '\n';
  }
}

std::string render_table(const std::vector<ArmSummary>& rows, const std::string& title) {
  std::ostringstream out;
  out << title << "\n";
  out << std::left << std::setw(14) << "arm" << std::right << std::setw(22) << "return (mean +- std)"
      << std::setw(12) << "normalized" << std::setw(8) << "runs" << std::setw(8) << "failed" << "\n";
  out << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(1);
    if (r.n_ok > 0) cell << r.mean << " +- " << r.std;
    else cell << "--";
    std::ostringstream norm;
    norm << std::fixed << std::setprecision(1);
    if (r.normalized_mean) norm << *r.normalized_mean;
    else norm << "--";
    out << std::left << std::setw(14) << r.arm << std::right << std::setw(22) << cell.str() << std::setw(12)
        << norm.str() << std::setw(8) << r.n_ok << std::setw(8) << r.n_failed << "\n";
  }
  return out.str();
}

}  // namespace mopo
