// noc: train, evaluate and inspect neural optimal control models.
//
// Exit codes: 0 success, 1 other failure, 2 bad config or arguments,
// 3 numerical divergence, 4 unsupported task.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "noc/noc.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kDivergence = 3, kUnsupported = 4 };

noc::Vec parse_vector(const std::string& text, const std::string& what) {
  noc::Vec v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw noc::ConfigError(what + ": '" + item + "' is not a number");
    }
  }
  return v;
}

struct Common {
  std::string config_path;
  std::string task;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> solver_steps;
  std::optional<double> horizon;
  std::string target;
  std::vector<std::string> x0;
  bool training_states = false;
};

void add_overrides(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--solver-steps", c.solver_steps, "Override the number of RK4 steps over the horizon");
}

void add_task_options(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run config (e.g. <run>/config.json); defaults follow the checkpoint task");
  cmd->add_option("--task", c.task, "Task when no config is given (default: the checkpoint's task)");
  cmd->add_option("--horizon", c.horizon, "Override the horizon T");
  cmd->add_option("--target", c.target, "Override the target state, comma separated");
  add_overrides(cmd, c);
}

void add_x0_options(CLI::App* cmd, Common& c) {
  cmd->add_option("--x0", c.x0, "Initial state, comma separated; repeatable");
  cmd->add_flag("--training-states", c.training_states, "Also use the config's seeded training initial states");
}

void apply_overrides(noc::RunConfig& rc, const Common& c) {
  if (c.seed) rc.train.seed = *c.seed;
  if (c.solver_steps) rc.train.solver_steps = *c.solver_steps;
  if (c.horizon) rc.train.horizon = *c.horizon;
  if (!c.target.empty()) rc.train.target = parse_vector(c.target, "--target");
}

noc::RunConfig resolve_config(const Common& c, noc::TaskKind checkpoint_task) {
  noc::RunConfig rc;
  if (!c.config_path.empty()) rc = noc::load_run_config(c.config_path);
  else rc = noc::default_run_config(c.task.empty() ? checkpoint_task : noc::task_from_string(c.task));
  apply_overrides(rc, c);
  rc.train.validate(rc.state_dim());
  return rc;
}

std::vector<noc::Vec> resolve_x0s(const Common& c, const noc::RunConfig& rc) {
  std::vector<noc::Vec> xs;
  for (const std::string& s : c.x0) xs.push_back(parse_vector(s, "--x0"));
  if (c.training_states) {
    auto extra = noc::sample_initial_states(rc.train, noc::SeedPlan::from(rc.train.seed).initial_states,
                                            rc.train.batch_size);
    xs.insert(xs.end(), extra.begin(), extra.end());
  }
  return xs;
}

noc::Checkpoint load_ckpt(const std::string& path) {
  try {
    return noc::load_checkpoint(path);
  } catch (const noc::CheckpointError& e) {
    throw noc::ConfigError(e.what());
  }
}

int cmd_train(const std::string& config_path, const Common& c, bool quiet) {
  noc::RunConfig rc = noc::load_run_config(config_path);
  apply_overrides(rc, c);
  if (!c.out.empty()) rc.output_dir = c.out;
  rc.train.validate(rc.state_dim());
  std::fprintf(stderr, "training %s: %zu alternations x %zu trajectories -> %s\n", noc::to_string(rc.task),
               rc.train.alternations, rc.train.batch_size, rc.output_dir.c_str());
  auto progress = [&](const noc::NocModel&, const noc::AlternationRecord& r) {
    if (quiet) return;
    std::fprintf(stderr, "  alternation %zu: dynamics loss %.4g, control loss %.4g, env rollouts %llu", r.index,
                 r.dynamics_loss.empty() ? 0.0 : r.dynamics_loss.back(),
                 r.control_loss.empty() ? 0.0 : r.control_loss.back(), static_cast<unsigned long long>(r.env_rollouts));
    if (r.evaluated)
      std::fprintf(stderr, ", true endpoint distance %.4g, model deviation %.4g", r.eval.mean_endpoint_distance,
                   r.eval.model_deviation);
    std::fprintf(stderr, "\n");
  };
  const noc::RunOutcome out = noc::run_training(rc, rc.output_dir, progress);
  std::fprintf(stderr, "done: %llu env rollouts, endpoint distance %.4g, model deviation %.4g\n",
               static_cast<unsigned long long>(out.result.log.env_rollouts()), out.final_eval.mean_endpoint_distance,
               out.final_eval.model_deviation);
  return kOk;
}

int cmd_eval(const std::string& ckpt_path, const Common& c) {
  const noc::Checkpoint ck = load_ckpt(ckpt_path);
  const noc::RunConfig rc = resolve_config(c, ck.task);
  const std::vector<noc::Vec> x0s = resolve_x0s(c, rc);
  if (x0s.empty()) {
    std::fprintf(stderr, "warning: no initial states given (use --x0 or --training-states); nothing to do\n");
    return kOk;
  }
  const noc::EvalOutcome out = noc::run_eval(ck, rc, x0s, c.out.empty() ? "eval" : c.out);
  std::cout << out.report.dump(2) << '\n';
  return kOk;
}

int cmd_oracle(const std::string& ckpt_path, const Common& c, std::size_t panels) {
  const noc::Checkpoint ck = load_ckpt(ckpt_path);
  if (ck.task != noc::TaskKind::linear)
    throw noc::UnsupportedTaskError(std::string("oracle comparison needs the linear task, checkpoint is for '") +
                                    noc::to_string(ck.task) + "'");
  const noc::RunConfig rc = resolve_config(c, ck.task);
  const std::vector<noc::Vec> x0s = resolve_x0s(c, rc);
  if (x0s.empty()) {
    std::fprintf(stderr, "warning: no initial states given (use --x0 or --training-states); nothing to do\n");
    return kOk;
  }
  const std::string out = c.out.empty() ? "comparison.json" : c.out;
  const auto reports = noc::run_oracle_compare(ck, rc, x0s, panels, out);
  for (std::size_t i = 0; i < reports.size(); ++i)
    std::printf("x0 #%zu: trajectory mse %.6g, control mse %.6g, endpoint error noc %.6g / optimal %.6g\n", i,
                reports[i].trajectory_mse, reports[i].control_mse, reports[i].noc_endpoint_error,
                reports[i].optimal_endpoint_error);
  std::printf("wrote %s\n", out.c_str());
  return kOk;
}

int cmd_vector_field(const std::string& ckpt_path, const Common& c, const std::string& bounds_text,
                     const std::vector<std::size_t>& resolution, double t_fixed, const std::vector<std::string>& rollouts) {
  const noc::Checkpoint ck = load_ckpt(ckpt_path);
  const noc::RunConfig rc = resolve_config(c, ck.task);
  noc::GridBounds bounds;
  if (!bounds_text.empty()) {
    const noc::Vec b = parse_vector(bounds_text, "--bounds");
    if (b.size() != 4) throw noc::ConfigError("--bounds needs x1min,x1max,x2min,x2max");
    bounds = {b[0], b[1], b[2], b[3]};
  }
  if (resolution.empty() || resolution.size() > 2) throw noc::ConfigError("--resolution takes one or two counts");
  const std::size_t r1 = resolution[0];
  const std::size_t r2 = resolution.size() == 2 ? resolution[1] : resolution[0];
  if (r1 < 2 || r2 < 2) throw noc::ConfigError("--resolution must be at least 2 per axis");
  std::vector<noc::Trajectory> refs;
  for (const std::string& path : rollouts) {
    std::ifstream is(path);
    if (!is) throw noc::ConfigError("cannot open rollout CSV '" + path + "'");
    refs.push_back(noc::read_trajectory_csv(is));
  }
  const std::string out = c.out.empty() ? "vector_field.csv" : c.out;
  const noc::VectorFieldGrid grid = noc::run_vector_field(ck, rc, bounds, r1, r2, t_fixed, refs, out);
  const noc::LocalFitSummary s = noc::local_fit_summary(grid);
  std::printf("%zu cells; mean similarity near rollouts (<0.1) %.4f over %zu cells, far (>1.0) %.4f over %zu cells\n",
              grid.cells.size(), s.near_mean, s.near_count, s.far_mean, s.far_count);
  std::printf("wrote %s\n", out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural optimal control: alternating training of a controller and a learned dynamics model"};
  app.require_subcommand(1);

  Common c;
  bool quiet = false;
  std::string config_path, ckpt_path, bounds_text;
  std::size_t panels = 256;
  std::vector<std::size_t> resolution{21};
  double t_fixed = 0.0;
  std::vector<std::string> rollouts;

  CLI::App* train = app.add_subcommand("train", "Run alternating training from a config file");
  train->add_option("config", config_path, "Config JSON")->required();
  train->add_option("--out", c.out, "Run directory (overrides the config's output_dir)");
  train->add_flag("--quiet", quiet, "No per-alternation progress");
  add_overrides(train, c);

  CLI::App* eval = app.add_subcommand("eval", "Roll a checkpoint out in the true and the learned dynamics");
  eval->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--out", c.out, "Output directory (default: eval)");
  add_task_options(eval, c);
  add_x0_options(eval, c);

  CLI::App* oracle = app.add_subcommand("oracle-compare", "Compare a linear-task controller with the analytic optimum");
  oracle->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
  oracle->add_option("--out", c.out, "Report JSON (default: comparison.json)");
  oracle->add_option("--panels", panels, "Simpson panels for the Gramian (doubled until converged)");
  add_task_options(oracle, c);
  add_x0_options(oracle, c);

  CLI::App* vf = app.add_subcommand("vector-field", "Compare true and learned closed-loop fields on a 2-D grid");
  vf->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
  vf->add_option("--out", c.out, "Grid CSV (default: vector_field.csv)");
  vf->add_option("--bounds", bounds_text, "x1min,x1max,x2min,x2max (default -2.5,2.5,-2.5,2.5)");
  vf->add_option("--resolution", resolution, "Cells per axis: n or n1 n2 (default 21)")->expected(1, 2);
  vf->add_option("--time", t_fixed, "Time slice for the controller and the learned field (default 0)");
  vf->add_option("--rollouts", rollouts, "Trajectory CSVs whose states define 'near'; default: true rollouts "
                                         "of the checkpoint from the config's initial states");
  add_task_options(vf, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train(config_path, c, quiet);
    if (*eval) return cmd_eval(ckpt_path, c);
    if (*oracle) return cmd_oracle(ckpt_path, c, panels);
    if (*vf) return cmd_vector_field(ckpt_path, c, bounds_text, resolution, t_fixed, rollouts);
  } catch (const noc::UnsupportedTaskError& e) {
    std::fprintf(stderr, "error: unsupported task: %s\n", e.what());
    return kUnsupported;
  } catch (const noc::PhaseError& e) {
    std::fprintf(stderr, "error: training diverged in alternation %zu, %s phase: %s\n", e.alternation(),
                 e.phase().c_str(), e.what());
    return kDivergence;
  } catch (const noc::DivergenceError& e) {
    std::fprintf(stderr, "error: rollout diverged at step %zu: %s\n", e.step(), e.what());
    return kDivergence;
  } catch (const noc::ConfigError& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
