#pragma once

// The work behind the CLI subcommands other than `train` (see io.hpp for
// that one). Each returns its result and, given an output path, writes it.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noc/checkpoint.hpp"
#include "noc/config.hpp"
#include "noc/io.hpp"
#include "noc/oracle.hpp"
#include "noc/vector_field.hpp"

namespace noc {

// The checkpoint must have been trained on the configured task, with
// networks whose shapes fit that task's environment.
inline void check_compatible(const Checkpoint& ck, const RunConfig& rc, const Environment& env) {
  if (ck.task != rc.task)
    throw ConfigError(std::string("checkpoint was trained on task '") + to_string(ck.task) + "', config is for '" +
                      to_string(rc.task) + "'");
  if (ck.model.state_dim() != env.state_dim() || ck.model.control_dim() != env.control_dim())
    throw DimensionError("checkpoint networks have state/control dims " + std::to_string(ck.model.state_dim()) + "/" +
                         std::to_string(ck.model.control_dim()) + ", task '" + to_string(rc.task) + "' expects " +
                         std::to_string(env.state_dim()) + "/" + std::to_string(env.control_dim()));
}

inline void check_initial_states(const std::vector<Vec>& x0s, std::size_t n) {
  for (const Vec& x0 : x0s)
    if (x0.size() != n)
      throw DimensionError("initial state has " + std::to_string(x0.size()) + " entries, expected " + std::to_string(n));
}

struct EvalOutcome {
  EvalMetrics metrics;
  std::vector<double> endpoint_distance;
  std::vector<double> deviation;
  nlohmann::json report;
};

// Rolls the checkpoint's controller through the true and the learned
// dynamics from each x0. Writes true_i.csv, learned_i.csv, deviation_i.csv
// and metrics.json when out_dir is non-empty.
inline EvalOutcome run_eval(const Checkpoint& ck, const RunConfig& rc, const std::vector<Vec>& x0s,
                            const fs::path& out_dir) {
  const Environment env = rc.make_environment();
  check_compatible(ck, rc, env);
  check_initial_states(x0s, env.state_dim());
  EvalOutcome out;
  if (x0s.empty()) return out;
  out.metrics = evaluate_model(ck.model, env, x0s, rc.train);
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < x0s.size(); ++i) {
    const Trajectory& t = out.metrics.true_rollouts[i];
    const Trajectory& l = out.metrics.learned_rollouts[i];
    out.endpoint_distance.push_back(distance(t.final_state(), rc.train.target));
    out.deviation.push_back(dynamics_loss(l, t));
    per.push_back({{"x0", x0s[i]},
                   {"true_final_state", Vec(t.final_state().begin(), t.final_state().end())},
                   {"learned_final_state", Vec(l.final_state().begin(), l.final_state().end())},
                   {"endpoint_distance", out.endpoint_distance.back()},
                   {"model_deviation", out.deviation.back()}});
  }
  out.report = to_json(out.metrics);
  out.report["task"] = to_string(rc.task);
  out.report["target"] = rc.train.target;
  out.report["horizon"] = rc.train.horizon;
  out.report["solver_steps"] = rc.train.solver_steps;
  out.report["rollouts"] = per;
  if (!out_dir.empty()) {
    for (std::size_t i = 0; i < x0s.size(); ++i) {
      const std::string s = std::to_string(i);
      write_trajectory_file(out_dir / ("true_" + s + ".csv"), out.metrics.true_rollouts[i]);
      write_trajectory_file(out_dir / ("learned_" + s + ".csv"), out.metrics.learned_rollouts[i]);
      write_text_file(out_dir / ("deviation_" + s + ".csv"),
                      deviation_csv_string(out.metrics.learned_rollouts[i], out.metrics.true_rollouts[i]));
    }
    write_json_file(out_dir / "metrics.json", out.report);
  }
  return out;
}

// Compares the checkpoint's controller with the analytic minimum-energy law
// from each x0 to the configured target. Linear task only.
inline std::vector<ComparisonReport> run_oracle_compare(const Checkpoint& ck, const RunConfig& rc,
                                                        const std::vector<Vec>& x0s, std::size_t gramian_panels,
                                                        const fs::path& out_file) {
  if (ck.task != TaskKind::linear || rc.task != TaskKind::linear)
    throw UnsupportedTaskError(std::string("oracle comparison needs the linear task, checkpoint is for '") +
                               to_string(ck.task) + "'");
  const Environment env = rc.make_environment();
  check_compatible(ck, rc, env);
  check_initial_states(x0s, env.state_dim());
  const ControllerPolicy policy = ck.model.policy();
  std::vector<ComparisonReport> reports;
  nlohmann::json arr = nlohmann::json::array();
  double traj = 0.0, ctrl = 0.0;
  for (const Vec& x0 : x0s) {
    const OptimalControlLaw law =
        OptimalControlLaw::build(rc.linear.A, rc.linear.B, rc.train.horizon, x0, rc.train.target, gramian_panels);
    reports.push_back(compare_controllers(law, policy, env, rc.train.solver_steps));
    nlohmann::json j = to_json(reports.back());
    j["x0"] = x0;
    arr.push_back(j);
    traj += reports.back().trajectory_mse;
    ctrl += reports.back().control_mse;
  }
  if (!out_file.empty() && !reports.empty()) {
    const double inv = 1.0 / static_cast<double>(reports.size());
    write_json_file(out_file, {{"target", rc.train.target},
                               {"horizon", rc.train.horizon},
                               {"solver_steps", rc.train.solver_steps},
                               {"mean_trajectory_mse", traj * inv},
                               {"mean_control_mse", ctrl * inv},
                               {"comparisons", arr}});
  }
  return reports;
}

// Reference states default to true rollouts of the checkpoint's controller
// from the configured initial states.
inline VectorFieldGrid run_vector_field(const Checkpoint& ck, const RunConfig& rc, const GridBounds& bounds,
                                        std::size_t resolution1, std::size_t resolution2, double t_fixed,
                                        std::vector<Trajectory> references, const fs::path& out_file) {
  const Environment env = rc.make_environment();
  if (env.state_dim() != 2)
    throw UnsupportedTaskError("vector field grids need a 2-D state; task '" + std::string(to_string(rc.task)) +
                               "' has " + std::to_string(env.state_dim()));
  check_compatible(ck, rc, env);
  if (references.empty()) {
    const std::vector<Vec> x0s =
        sample_initial_states(rc.train, SeedPlan::from(rc.train.seed).initial_states, rc.train.batch_size);
    references = evaluate_model(ck.model, env, x0s, rc.train).true_rollouts;
  }
  VectorFieldGrid grid = vector_field_grid(ck.model, env, bounds, resolution1, resolution2, t_fixed, references);
  if (!out_file.empty()) {
    std::ostringstream os;
    write_vector_field_csv(os, grid);
    write_text_file(out_file, os.str());
  }
  return grid;
}

}  // namespace noc
