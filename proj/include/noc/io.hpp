#pragma once

// Run artifacts: JSON documents for summaries, logs and comparison reports,
// plus the directory layout written by a training run.
//
//   <out>/config.json                 explicit config snapshot
//   <out>/summary.json                final metrics and interaction count
//   <out>/log.json                    per-alternation loss curves and checks
//   <out>/checkpoints/alt_000.ckpt    untrained model; alt_k after k alternations
//   <out>/checkpoints/final.ckpt
//   <out>/trajectories/alt_k_real_i.csv, alt_k_pred_i.csv
//   <out>/final/true_i.csv, learned_i.csv
//
// Nothing written depends on wall-clock time, so identical runs produce
// identical files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noc/checkpoint.hpp"
#include "noc/config.hpp"
#include "noc/oracle.hpp"
#include "noc/trainer.hpp"

namespace noc {

namespace fs = std::filesystem;
using nlohmann::json;

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline void write_trajectory_file(const fs::path& path, const Trajectory& traj) {
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  write_text_file(path, os.str());
}

inline std::string trajectory_csv_string(const Trajectory& traj) {
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  return os.str();
}

inline std::string indexed_name(const std::string& stem, std::size_t k, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03zu", k);
  return stem + buf + ext;
}

inline json to_json(const EvalMetrics& m) {
  return {{"mean_endpoint_distance", m.mean_endpoint_distance},
          {"model_deviation", m.model_deviation},
          {"true_control_loss", m.true_control_loss},
          {"max_abs_state", m.max_abs_state}};
}

inline json to_json(const AlternationRecord& r) {
  json j = {{"index", r.index},
            {"dynamics_loss", r.dynamics_loss},
            {"control_loss", r.control_loss},
            {"env_rollouts", r.env_rollouts},
            {"env_rollouts_before_controller_phase", r.env_rollouts_before_controller},
            {"env_rollouts_after_controller_phase", r.env_rollouts_after_controller},
            {"controller_untouched_by_dynamics_phase", r.controller_untouched_by_dynamics_phase},
            {"dynamics_untouched_by_controller_phase", r.dynamics_untouched_by_controller_phase}};
  if (r.evaluated) j["eval"] = to_json(r.eval);
  return j;
}

inline json to_json(const AlternationLog& log) {
  json alts = json::array();
  for (const auto& r : log.alternations) alts.push_back(to_json(r));
  json j = {{"initial_states", log.initial_states}, {"alternations", alts}};
  if (!log.initial_eval.true_rollouts.empty()) j["initial_eval"] = to_json(log.initial_eval);
  return j;
}

inline json summary_json(const RunConfig& rc, const TrainResult& result, const EvalMetrics& final_eval) {
  const AlternationLog& log = result.log;
  json per_alt = json::array();
  for (const auto& r : log.alternations) {
    json a = {{"index", r.index},
              {"final_dynamics_loss", r.dynamics_loss.empty() ? 0.0 : r.dynamics_loss.back()},
              {"final_control_loss", r.control_loss.empty() ? 0.0 : r.control_loss.back()}};
    if (r.evaluated) a["eval"] = to_json(r.eval);
    per_alt.push_back(a);
  }
  bool isolation = true;
  for (const auto& r : log.alternations)
    isolation = isolation && r.controller_untouched_by_dynamics_phase && r.dynamics_untouched_by_controller_phase &&
                r.env_rollouts_before_controller == r.env_rollouts_after_controller;
  json j = {{"task", to_string(rc.task)},
            {"seed", rc.train.seed},
            {"alternations", rc.train.alternations},
            {"batch_size", rc.train.batch_size},
            {"env_rollouts", log.env_rollouts()},
            {"expected_env_rollouts", rc.train.alternations * rc.train.batch_size},
            {"phase_isolation_ok", isolation},
            {"final", to_json(final_eval)},
            {"per_alternation", per_alt}};
  if (!log.alternations.empty()) {
    const auto& last = log.alternations.back();
    j["final_dynamics_loss"] = last.dynamics_loss.empty() ? 0.0 : last.dynamics_loss.back();
    j["final_control_loss"] = last.control_loss.empty() ? 0.0 : last.control_loss.back();
  }
  return j;
}

inline json to_json(const ComparisonReport& r) {
  return {{"trajectory_mse", r.trajectory_mse},
          {"control_mse", r.control_mse},
          {"noc_endpoint_error", r.noc_endpoint_error},
          {"optimal_endpoint_error", r.optimal_endpoint_error},
          {"noc_trajectory_csv", trajectory_csv_string(r.noc)},
          {"optimal_trajectory_csv", trajectory_csv_string(r.optimal)}};
}

// Pointwise deviation between two rollouts on the same grid.
// Columns: t,d1..dn,norm
inline std::string deviation_csv_string(const Trajectory& a, const Trajectory& b) {
  require_same_grid(a, b);
  std::ostringstream os;
  os << 't';
  for (std::size_t i = 0; i < a.state_dim; ++i) os << ",d" << i + 1;
  os << ",norm\n";
  for (std::size_t k = 0; k < a.size(); ++k) {
    os << format_double(a.times[k]);
    double s = 0.0;
    for (std::size_t i = 0; i < a.state_dim; ++i) {
      const double d = a.state(k)[i] - b.state(k)[i];
      s += d * d;
      os << ',' << format_double(d);
    }
    os << ',' << format_double(std::sqrt(s)) << '\n';
  }
  return os.str();
}

struct RunOutcome {
  TrainResult result;
  EvalMetrics final_eval;
  json summary;
};

// Trains per rc and writes every artifact under out_dir.
inline RunOutcome run_training(const RunConfig& rc, const fs::path& out_dir,
                               const AlternationCallback& progress = {}) {
  fs::create_directories(out_dir / "checkpoints");
  fs::create_directories(out_dir / "trajectories");
  fs::create_directories(out_dir / "final");
  write_json_file(out_dir / "config.json", to_json(rc));

  Environment env = rc.make_environment();
  rc.train.validate(env.state_dim());
  save_checkpoint((out_dir / "checkpoints" / indexed_name("alt_", 0, ".ckpt")).string(),
                  Checkpoint{rc.task, initial_model(rc.train, env)});

  RunOutcome out;
  out.result = alternate_train(rc.train, env, [&](const NocModel& model, const AlternationRecord& rec) {
    const std::size_t k = rec.index;
    save_checkpoint((out_dir / "checkpoints" / indexed_name("alt_", k + 1, ".ckpt")).string(), Checkpoint{rc.task, model});
    for (std::size_t i = 0; i < rec.real_trajectories.size(); ++i) {
      const std::string stem = "alt_" + std::to_string(k) + "_";
      write_trajectory_file(out_dir / "trajectories" / (stem + "real_" + std::to_string(i) + ".csv"), rec.real_trajectories[i]);
      write_trajectory_file(out_dir / "trajectories" / (stem + "pred_" + std::to_string(i) + ".csv"),
                            rec.predicted_trajectories[i]);
    }
    if (progress) progress(model, rec);
  });

  save_checkpoint((out_dir / "checkpoints" / "final.ckpt").string(), Checkpoint{rc.task, out.result.model});
  const Environment eval_env = env.fresh_copy();
  out.final_eval = evaluate_model(out.result.model, eval_env, out.result.log.initial_states, rc.train);
  for (std::size_t i = 0; i < out.final_eval.true_rollouts.size(); ++i) {
    write_trajectory_file(out_dir / "final" / ("true_" + std::to_string(i) + ".csv"), out.final_eval.true_rollouts[i]);
    write_trajectory_file(out_dir / "final" / ("learned_" + std::to_string(i) + ".csv"),
                          out.final_eval.learned_rollouts[i]);
  }
  out.summary = summary_json(rc, out.result, out.final_eval);
  write_json_file(out_dir / "summary.json", out.summary);
  write_json_file(out_dir / "log.json", to_json(out.result.log));
  return out;
}

}  // namespace noc
