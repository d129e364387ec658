// mopo-kit: certification, dataset collection, training and ablations.
// Exit codes: 0 success, 1 failed check or run, 2 usage error.

#include "mopo/experiments.hpp"
#include "mopo/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace mopo;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

/// Refuses to clobber existing outputs unless --force was given.
void claim_file(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) throw UsageError(path.string() + " exists; pass --force to overwrite");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void claim_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) throw UsageError(dir.string() + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

std::string fmt(double x, int precision = 2) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << x;
  return out.str();
}

// ------------------------------------------------------------------ certify

struct CertifyArgs {
  std::string suite = "all";
  std::optional<std::size_t> instances;
  std::uint64_t seed = 0;
  std::string out;
  bool force = false;
};

int cmd_certify(const CertifyArgs& a) {
  std::vector<std::string> suites = a.suite == "all" ? std::vector<std::string>{"lemma", "bound", "theorem"}
                                                     : std::vector<std::string>{a.suite};
  if (!a.out.empty()) claim_dir(a.out, a.force);
  bool all_passed = true;
  for (const auto& name : suites) {
    HarnessReport report;
    if (name == "lemma") report = run_lemma_suite(a.instances.value_or(200), SizeCaps{}, a.seed);
    else if (name == "bound") report = run_bound_suite(a.instances.value_or(100), a.seed);
    else report = run_theorem_suite(a.instances.value_or(50), a.seed);
    std::cout << to_text(report) << "wall time " << fmt(report.wall_seconds) << " s\n\n";
    all_passed = all_passed && report.passed();
    if (!a.out.empty()) {
      write_text(fs::path(a.out) / (name + ".json"), to_json(report).dump(2) + "\n");
      write_text(fs::path(a.out) / (name + ".txt"), to_text(report));
    }
  }
  return all_passed ? 0 : 1;
}

// ------------------------------------------------------------------ collect

struct CollectArgs {
  std::string env = "pointmass-2d";
  std::string kind = "random";
  std::size_t steps = 50000;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> behavior_seed;
  std::string reward;
  double expert_fraction = 0.5;
  std::string partner = "medium";
  std::string out;
  bool force = false;
};

void print_stats(const TransitionDataset& data) {
  std::cout << "records " << data.size() << "\n";
  for (const auto& seg : data.meta().segments)
    std::cout << "  segment " << seg.source << " [" << seg.begin << ", " << seg.begin + seg.count << ")\n";
  try {
    const auto st = batch_stats(data);
    std::cout << "episodes " << st.episodes << "  batch mean " << fmt(st.mean_return) << "  batch max "
              << fmt(st.max_return) << "  (reward " << data.meta().reward_name << ")\n";
  } catch (const std::invalid_argument&) {
    std::cout << "no complete episode\n";
  }
}

int cmd_collect(const CollectArgs& a) {
  claim_file(a.out, a.force);
  DatasetRecipe recipe;
  recipe.kind = dataset_kind_from_string(a.kind);
  recipe.steps = a.steps;
  recipe.behavior_seed = a.behavior_seed.value_or(a.seed);
  recipe.reward = a.reward;
  recipe.expert_fraction = a.expert_fraction;
  recipe.partner = dataset_kind_from_string(a.partner);
  const auto data = collect_dataset(*make_env(a.env), recipe, a.seed);
  write_dataset(data, a.out);
  print_stats(data);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ------------------------------------------------------------------ relabel

struct RelabelArgs {
  std::string in;
  std::string reward;
  std::string out;
  bool force = false;
};

int cmd_relabel(const RelabelArgs& a) {
  claim_file(a.out, a.force);
  const auto data = relabel_rewards(read_dataset(a.in), a.reward);
  write_dataset(data, a.out);
  print_stats(data);
  return 0;
}

// ------------------------------------------------------------ train / ablate

struct RunArgs {
  std::string data;
  std::string reward;
  std::string config;
  std::string penalty;
  std::optional<double> lambda;
  std::optional<int> h;
  std::optional<std::size_t> b;
  std::optional<double> real_frac;
  std::optional<int> epochs;
  std::optional<int> steps_per_epoch;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> models;
  std::optional<std::size_t> elites;
  std::optional<int> eval_episodes;
  bool random_actions = false;
  std::uint64_t seed = 0;
  std::string out;
  bool force = false;
};

MopoConfig base_config(const RunArgs& a) {
  MopoConfig c;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw UsageError("cannot read config " + a.config);
    c = mopo_config_from_json(nlohmann::json::parse(in));
  }
  if (!a.penalty.empty()) c.penalty = penalty_kind_from_string(a.penalty);
  if (a.lambda) c.penalty_coeff = *a.lambda;
  if (a.h) c.rollout_horizon = *a.h;
  if (a.b) c.rollout_batch = *a.b;
  if (a.real_frac) c.real_fraction = *a.real_frac;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.steps_per_epoch) c.steps_per_epoch = *a.steps_per_epoch;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.models) c.ensemble_size = *a.models;
  if (a.elites) c.elites = *a.elites;
  if (a.eval_episodes) c.eval_episodes = *a.eval_episodes;
  if (a.random_actions) c.random_action_rollouts = true;
  c.seed = a.seed;
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

TransitionDataset load_task_data(const RunArgs& a, std::string& reward) {
  TransitionDataset data = read_dataset(a.data);
  reward = a.reward.empty() ? data.meta().reward_name : a.reward;
  if (reward.empty()) reward = make_env(data.meta().env_name)->default_reward();
  if (reward != data.meta().reward_name) data = relabel_rewards(data, reward);
  return data;
}

nlohmann::json dataset_summary(const TransitionDataset& data) {
  nlohmann::json j{{"env", data.meta().env_name}, {"reward", data.meta().reward_name}, {"records", data.size()}};
  try {
    const auto st = batch_stats(data);
    j["batch_mean"] = st.mean_return;
    j["batch_max"] = st.max_return;
    j["episodes"] = st.episodes;
  } catch (const std::invalid_argument&) {
  }
  return j;
}

int cmd_train(const RunArgs& a) {
  const MopoConfig cfg = base_config(a);
  if (a.out.empty()) throw UsageError("--out is required");
  claim_dir(a.out, a.force);
  std::string reward;
  const auto data = load_task_data(a, reward);
  const auto env = make_env(data.meta().env_name);
  const fs::path out(a.out);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");

  const auto ensemble = train_run_ensemble(cfg, data);
  save_ensemble(*ensemble, out / "ensemble");
  const PolicyEvaluator evaluator(*env, reward, cfg.eval_episodes, evaluation_seed(cfg.seed));
  const auto res = mopo_train(cfg, data, evaluator, ensemble, true_dynamics(data.meta().env_name));
  write_metrics_csv(res.history, out / "metrics.csv");
  res.policy.save(out / "policy");

  nlohmann::json summary{{"task", evaluator.task()},
                         {"penalty", to_string(cfg.penalty)},
                         {"lambda", cfg.penalty_coeff},
                         {"seed", cfg.seed},
                         {"final_return_mean", res.final_return_mean},
                         {"final_return_std", res.final_return_std},
                         {"elite_holdout_nll", ensemble->elite_holdout_nll()},
                         {"rollouts_terminated", res.rollouts_terminated},
                         {"rollouts_nonfinite", res.rollouts_nonfinite},
                         {"dataset", dataset_summary(data)}};
  if (AnchorTable::builtin().contains(evaluator.task()))
    summary["normalized_score"] = normalized_score(evaluator.task(), res.final_return_mean);
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "final return " << fmt(res.final_return_mean) << " +- " << fmt(res.final_return_std);
  if (summary.contains("normalized_score")) std::cout << "  normalized " << fmt(summary["normalized_score"].get<double>());
  std::cout << "\nwrote " << a.out << "\n";
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_ablate(const RunArgs& a, const std::string& arms_flag, std::size_t n_seeds) {
  const MopoConfig base = base_config(a);
  if (a.out.empty()) throw UsageError("--out is required");
  if (n_seeds < 1) throw UsageError("--seeds must be at least 1");
  const auto arms = arms_flag.empty() ? ablation_arms() : split_list(arms_flag);
  if (arms.empty()) throw UsageError("no arms given");
  for (const auto& arm : arms) {
    try {
      arm_config(arm, base);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  claim_dir(a.out, a.force);
  std::string reward;
  const auto data = load_task_data(a, reward);
  const auto env = make_env(data.meta().env_name);
  const fs::path out(a.out);

  std::vector<RunSpec> specs;
  for (const auto& arm : arms) {
    for (std::size_t k = 0; k < n_seeds; ++k) {
      RunSpec s{arm, a.seed + k, arm_config(arm, base)};
      s.config.seed = s.seed;
      specs.push_back(s);
    }
  }
  GridInputs in;
  in.dataset = &data;
  in.env = env.get();
  in.reward = reward;
  in.eval_episodes = base.eval_episodes;
  in.workers = worker_count();
  in.on_done = [](const RunOutcome& o) {
    std::cerr << "  " << o.arm << " seed " << o.seed << ": "
              << (o.ok ? "return " + fmt(o.final_return_mean) : "FAILED " + o.error) << "\n";
  };
  std::cerr << specs.size() << " runs on " << in.workers << " worker(s)\n";
  const auto runs = run_grid(specs, in);

  for (const auto& r : runs) {
    if (!r.ok) continue;
    const fs::path dir = out / "runs" / r.arm / ("seed" + std::to_string(r.seed));
    fs::create_directories(dir);
    write_metrics_csv(r.history, dir / "metrics.csv");
  }
  const auto rows = summarize(runs, arms);
  std::ostringstream runs_csv, summary_csv;
  write_runs_csv(runs, runs_csv);
  write_summary_csv(rows, summary_csv);
  write_text(out / "runs.csv", runs_csv.str());
  write_text(out / "summary.csv", summary_csv.str());
  std::ostringstream title;
  title << "ablation on " << task_key(data.meta().env_name, reward) << ", " << n_seeds << " seed(s), lambda "
        << base.penalty_coeff << ", h " << base.rollout_horizon;
  try {
    const auto st = batch_stats(data);
    title << "\nbatch mean " << fmt(st.mean_return, 1) << ", batch max " << fmt(st.max_return, 1);
  } catch (const std::invalid_argument&) {
  }
  const std::string table = render_table(rows, title.str());
  write_text(out / "table.txt", table);
  std::cout << table;
  for (const auto& r : runs)
    if (!r.ok) return 1;
  return 0;
}

void add_run_flags(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--data", a.data, "dataset file (JSON Lines)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--reward", a.reward, "relabel the dataset to this reward before training");
  cmd->add_option("--config", a.config, "base MopoConfig JSON; flags override it")->check(CLI::ExistingFile);
  cmd->add_option("--penalty", a.penalty, "penalty kind")
      ->check(CLI::IsMember({"max-std", "mean-std", "disagreement", "oracle", "none"}));
  cmd->add_option("--lambda", a.lambda, "penalty coefficient");
  cmd->add_option("--h", a.h, "rollout horizon");
  cmd->add_option("--b", a.b, "rollouts per epoch");
  cmd->add_option("--real-frac", a.real_frac, "share of real records per batch");
  cmd->add_option("--epochs", a.epochs, "training epochs");
  cmd->add_option("--steps-per-epoch", a.steps_per_epoch, "actor-critic updates per epoch");
  cmd->add_option("--batch-size", a.batch_size, "actor-critic batch size");
  cmd->add_option("--models", a.models, "ensemble members trained");
  cmd->add_option("--elites", a.elites, "ensemble members kept");
  cmd->add_option("--eval-episodes", a.eval_episodes, "evaluation episodes");
  cmd->add_flag("--random-actions", a.random_actions, "roll out uniform random actions");
  cmd->add_flag("--force", a.force, "overwrite an existing output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mopo-kit: uncertainty-penalized offline model-based RL toolkit"};
  app.require_subcommand(1);
  // "--h" is the rollout horizon, so help is long-form only.
  app.set_help_flag("--help", "print this help message and exit");
  app.set_help_all_flag("--help-all");

  CertifyArgs certify;
  auto* c = app.add_subcommand("certify", "run the tabular certification suites");
  c->add_option("--suite", certify.suite, "lemma, bound, theorem or all")
      ->check(CLI::IsMember({"lemma", "bound", "theorem", "all"}));
  c->add_option("--instances", certify.instances, "instances per suite (defaults 200 / 100 / 50)")
      ->check(CLI::PositiveNumber);
  c->add_option("--seed", certify.seed, "suite seed");
  c->add_option("--out", certify.out, "directory for JSON and text reports");
  c->add_flag("--force", certify.force, "overwrite existing reports");

  CollectArgs collect;
  auto* k = app.add_subcommand("collect", "generate a batch dataset");
  k->add_option("--env", collect.env, "environment")->check(CLI::IsMember(env_names()));
  k->add_option("--kind", collect.kind, "random, medium, mixed or medium-expert")
      ->check(CLI::IsMember({"random", "medium", "mixed", "medium-expert"}));
  k->add_option("--steps", collect.steps, "record budget")->check(CLI::PositiveNumber);
  k->add_option("--seed", collect.seed, "collection seed");
  k->add_option("--behavior-seed", collect.behavior_seed, "behavior training seed (defaults to --seed)");
  k->add_option("--reward", collect.reward, "reward the behavior optimizes (defaults to the env default)");
  k->add_option("--expert-fraction", collect.expert_fraction, "medium-expert: expert share");
  k->add_option("--partner", collect.partner, "medium-expert: partner source")
      ->check(CLI::IsMember({"medium", "random"}));
  k->add_option("--out", collect.out, "output file")->required();
  k->add_flag("--force", collect.force, "overwrite an existing file");

  RelabelArgs relabel;
  auto* r = app.add_subcommand("relabel", "recompute rewards of a dataset");
  r->add_option("--in", relabel.in, "input dataset")->required()->check(CLI::ExistingFile);
  r->add_option("--reward", relabel.reward, "new reward name")->required();
  r->add_option("--out", relabel.out, "output file")->required();
  r->add_flag("--force", relabel.force, "overwrite an existing file");

  RunArgs train;
  auto* t = app.add_subcommand("train", "train one policy on a dataset");
  add_run_flags(t, train);
  t->add_option("--seed", train.seed, "run seed");
  t->add_option("--out", train.out, "output directory")->required();

  RunArgs ablate;
  std::string arms;
  std::size_t n_seeds = 6;
  auto* ab = app.add_subcommand("ablate", "run penalty ablation arms over seeds");
  add_run_flags(ab, ablate);
  ab->add_option("--arms", arms, "comma-separated arms: max-std,disagreement,mean-std,no-pen,no-ens,oracle");
  ab->add_option("--seeds", n_seeds, "number of seeds per arm");
  ab->add_option("--seed", ablate.seed, "first seed");
  ab->add_option("--out", ablate.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c) return cmd_certify(certify);
    if (*k) return cmd_collect(collect);
    if (*r) return cmd_relabel(relabel);
    if (*t) return cmd_train(train);
    if (*ab) return cmd_ablate(ablate, arms, n_seeds);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
