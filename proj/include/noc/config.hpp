#pragma once

// Run configuration: one JSON document per run. Every key is optional
// except "task"; missing keys take the task defaults below. Unknown keys
// are rejected so that typos cannot silently fall back to defaults.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noc/environments.hpp"
#include "noc/errors.hpp"
#include "noc/trainer.hpp"

namespace noc {

struct RunConfig {
  TaskKind task = TaskKind::linear;
  TrainConfig train;
  LinearParams linear;
  CartPoleParams cartpole;
  std::string output_dir = "runs/out";

  Environment make_environment() const {
    return task == TaskKind::linear ? Environment::linear(linear) : Environment::cartpole(cartpole);
  }
  std::size_t state_dim() const { return task == TaskKind::linear ? linear.A.rows() : 4; }
};

// Settings used for the linear steering task and the cart-pole
// stabilisation task when a config leaves a key out.
inline RunConfig default_run_config(TaskKind task) {
  RunConfig rc;
  rc.task = task;
  TrainConfig& t = rc.train;
  if (task == TaskKind::linear) {
    t.alternations = 10;
    t.batch_size = 5;
    t.dynamics_stages = {{1.0, 10000, 0.005}};
    t.controller_steps = 10000;
    t.controller_lr = 0.005;
    t.target = {1.0, -1.0};
    t.horizon = 1.0;
    t.solver_steps = 100;
    t.loss_mode = LossMode::end_state;
    t.x0_low = {-2.0, -2.0};
    t.x0_high = {2.0, 2.0};
    t.controller_hidden = {30};
    t.dynamics_hidden = {30};
    rc.output_dir = "runs/linear";
  } else {
    t.alternations = 12;
    t.batch_size = 5;
    t.dynamics_stages = {{0.5, 2000, 0.005}, {1.0, 2000, 0.001}, {2.0, 2000, 0.0001}};
    t.controller_steps = 2000;
    t.controller_lr = 0.0001;
    t.target = {0.0, 0.0, 0.0, 0.0};
    t.horizon = 2.0;
    t.solver_steps = 200;
    t.loss_mode = LossMode::integral;
    t.x0_low = {-0.05, -0.05, -0.05, -0.05};
    t.x0_high = {0.05, 0.05, 0.05, 0.05};
    t.controller_hidden = {64};
    t.dynamics_hidden = {64, 32};
    rc.output_dir = "runs/cartpole";
  }
  return rc;
}

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline const json& require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  return j;
}

inline double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

inline std::uint64_t get_count(const json& j, const std::string& where) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
    throw ConfigError(where + ": expected a non-negative integer");
  return j.get<std::uint64_t>();
}

inline bool get_bool(const json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError(where + ": expected true or false");
  return j.get<bool>();
}

inline Vec get_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  Vec v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(get_number(j[i], where + "[" + std::to_string(i) + "]"));
  return v;
}

inline std::vector<std::size_t> get_sizes(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of positive integers");
  std::vector<std::size_t> v;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto n = get_count(j[i], where + "[" + std::to_string(i) + "]");
    if (n == 0) throw ConfigError(where + "[" + std::to_string(i) + "]: must be positive");
    v.push_back(static_cast<std::size_t>(n));
  }
  return v;
}

inline Mat get_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
  std::vector<Vec> rows;
  for (std::size_t i = 0; i < j.size(); ++i) rows.push_back(get_vector(j[i], where + "[" + std::to_string(i) + "]"));
  Mat m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw ConfigError(where + ": rows have different lengths");
    for (std::size_t c = 0; c < m.cols(); ++c) m(i, c) = rows[i][c];
  }
  return m;
}

inline json matrix_json(const Mat& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (std::size_t c = 0; c < m.cols(); ++c) r.push_back(m(i, c));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& root) {
  using detail::get_bool;
  using detail::get_count;
  using detail::get_number;
  detail::require_object(root, "config");
  if (!root.contains("task") || !root["task"].is_string()) throw ConfigError("config: 'task' must be \"linear\" or \"cartpole\"");
  TaskKind task;
  try {
    task = task_from_string(root["task"].get<std::string>());
  } catch (const UnsupportedTaskError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig rc = default_run_config(task);
  TrainConfig& t = rc.train;

  detail::reject_unknown(root,
                         {"task", "seed", "alternations", "batch_size", "dynamics_stages", "controller_steps",
                          "controller_lr", "target", "horizon", "solver_steps", "loss_mode", "optimizer",
                          "time_feature", "initial_state_low", "initial_state_high", "controller_hidden",
                          "dynamics_hidden", "evaluate_each_alternation", "environment", "output_dir"},
                         "config");

  if (root.contains("seed")) t.seed = get_count(root["seed"], "seed");
  if (root.contains("alternations")) t.alternations = get_count(root["alternations"], "alternations");
  if (root.contains("batch_size")) t.batch_size = get_count(root["batch_size"], "batch_size");
  if (root.contains("controller_steps")) t.controller_steps = get_count(root["controller_steps"], "controller_steps");
  if (root.contains("controller_lr")) t.controller_lr = get_number(root["controller_lr"], "controller_lr");
  if (root.contains("horizon")) t.horizon = get_number(root["horizon"], "horizon");
  if (root.contains("solver_steps")) t.solver_steps = get_count(root["solver_steps"], "solver_steps");
  if (root.contains("time_feature")) t.time_feature = get_bool(root["time_feature"], "time_feature");
  if (root.contains("evaluate_each_alternation"))
    t.evaluate_each_alternation = get_bool(root["evaluate_each_alternation"], "evaluate_each_alternation");
  if (root.contains("target")) t.target = detail::get_vector(root["target"], "target");
  if (root.contains("initial_state_low")) t.x0_low = detail::get_vector(root["initial_state_low"], "initial_state_low");
  if (root.contains("initial_state_high")) t.x0_high = detail::get_vector(root["initial_state_high"], "initial_state_high");
  if (root.contains("controller_hidden")) t.controller_hidden = detail::get_sizes(root["controller_hidden"], "controller_hidden");
  if (root.contains("dynamics_hidden")) t.dynamics_hidden = detail::get_sizes(root["dynamics_hidden"], "dynamics_hidden");
  if (root.contains("output_dir")) {
    if (!root["output_dir"].is_string()) throw ConfigError("output_dir: expected a string");
    rc.output_dir = root["output_dir"].get<std::string>();
  }
  if (root.contains("loss_mode")) {
    const auto& j = root["loss_mode"];
    if (j == "end_state") t.loss_mode = LossMode::end_state;
    else if (j == "integral") t.loss_mode = LossMode::integral;
    else throw ConfigError("loss_mode: expected \"end_state\" or \"integral\"");
  }
  if (root.contains("optimizer")) {
    const auto& j = root["optimizer"];
    if (j == "adam") t.optimizer = OptimizerKind::adam;
    else if (j == "sgd") t.optimizer = OptimizerKind::sgd;
    else throw ConfigError("optimizer: expected \"adam\" or \"sgd\"");
  }
  if (root.contains("dynamics_stages")) {
    const auto& arr = root["dynamics_stages"];
    if (!arr.is_array() || arr.empty()) throw ConfigError("dynamics_stages: expected a non-empty array");
    t.dynamics_stages.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "dynamics_stages[" + std::to_string(i) + "]";
      detail::require_object(arr[i], where);
      detail::reject_unknown(arr[i], {"horizon", "steps", "lr"}, where);
      if (!arr[i].contains("horizon") || !arr[i].contains("steps") || !arr[i].contains("lr"))
        throw ConfigError(where + ": needs horizon, steps and lr");
      t.dynamics_stages.push_back({get_number(arr[i]["horizon"], where + ".horizon"),
                                   static_cast<std::size_t>(get_count(arr[i]["steps"], where + ".steps")),
                                   get_number(arr[i]["lr"], where + ".lr")});
    }
  }
  if (root.contains("environment")) {
    const auto& e = detail::require_object(root["environment"], "environment");
    if (task == TaskKind::linear) {
      detail::reject_unknown(e, {"A", "B"}, "environment");
      if (e.contains("A")) rc.linear.A = detail::get_matrix(e["A"], "environment.A");
      if (e.contains("B")) rc.linear.B = detail::get_matrix(e["B"], "environment.B");
      try {
        rc.linear.validate();
      } catch (const std::exception& ex) {
        throw ConfigError(std::string("environment: ") + ex.what());
      }
    } else {
      detail::reject_unknown(e, {"gravity", "cart_mass", "pole_mass", "half_length"}, "environment");
      if (e.contains("gravity")) rc.cartpole.gravity = get_number(e["gravity"], "environment.gravity");
      if (e.contains("cart_mass")) rc.cartpole.cart_mass = get_number(e["cart_mass"], "environment.cart_mass");
      if (e.contains("pole_mass")) rc.cartpole.pole_mass = get_number(e["pole_mass"], "environment.pole_mass");
      if (e.contains("half_length")) rc.cartpole.half_length = get_number(e["half_length"], "environment.half_length");
      try {
        rc.cartpole.validate();
      } catch (const std::exception& ex) {
        throw ConfigError(std::string("environment: ") + ex.what());
      }
    }
  }
  t.validate(rc.state_dim());
  return rc;
}

// Parses text; JSON syntax errors report line and column.
inline RunConfig parse_run_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Fully explicit form; parsing it back yields the same RunConfig.
inline nlohmann::json to_json(const RunConfig& rc) {
  using nlohmann::json;
  const TrainConfig& t = rc.train;
  json stages = json::array();
  for (const auto& s : t.dynamics_stages) stages.push_back({{"horizon", s.horizon}, {"steps", s.steps}, {"lr", s.lr}});
  json j = {{"task", to_string(rc.task)},
            {"seed", t.seed},
            {"alternations", t.alternations},
            {"batch_size", t.batch_size},
            {"dynamics_stages", stages},
            {"controller_steps", t.controller_steps},
            {"controller_lr", t.controller_lr},
            {"target", t.target},
            {"horizon", t.horizon},
            {"solver_steps", t.solver_steps},
            {"loss_mode", to_string(t.loss_mode)},
            {"optimizer", to_string(t.optimizer)},
            {"time_feature", t.time_feature},
            {"initial_state_low", t.x0_low},
            {"initial_state_high", t.x0_high},
            {"controller_hidden", t.controller_hidden},
            {"dynamics_hidden", t.dynamics_hidden},
            {"evaluate_each_alternation", t.evaluate_each_alternation},
            {"output_dir", rc.output_dir}};
  if (rc.task == TaskKind::linear)
    j["environment"] = {{"A", detail::matrix_json(rc.linear.A)}, {"B", detail::matrix_json(rc.linear.B)}};
  else
    j["environment"] = {{"gravity", rc.cartpole.gravity},
                        {"cart_mass", rc.cartpole.cart_mass},
                        {"pole_mass", rc.cartpole.pole_mass},
                        {"half_length", rc.cartpole.half_length}};
  return j;
}

}  // namespace noc
