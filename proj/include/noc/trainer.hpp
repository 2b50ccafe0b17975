#pragma once

// Alternating training of the coupled model.
//
// Each alternation k:
//   1. deploy the current controller in the real environment from every
//      initial state of the batch and record the trajectories;
//   2. fit the dynamics learner so that rollouts of g(x, h(x,t), t) match
//      those trajectories (controller frozen, optionally on a curriculum of
//      growing horizons);
//   3. train the controller purely inside the learned dynamics (no
//      environment calls) to drive the predicted states to the target.
//
// Gradients flow through the unrolled RK4 rollout; batch gradients are
// summed in index order so runs are reproducible.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "noc/core_math.hpp"
#include "noc/environments.hpp"
#include "noc/errors.hpp"
#include "noc/mlp.hpp"
#include "noc/model.hpp"
#include "noc/odeint.hpp"
#include "noc/optimizer.hpp"
#include "noc/rng.hpp"

namespace noc {

enum class LossMode { end_state, integral };

inline const char* to_string(LossMode m) { return m == LossMode::end_state ? "end_state" : "integral"; }

struct DynamicsStage {
  double horizon = 1.0;  // train on [0, horizon]
  std::size_t steps = 0;
  double lr = 0.005;
};

struct TrainConfig {
  std::size_t alternations = 10;  // K
  std::size_t batch_size = 5;     // N
  std::vector<DynamicsStage> dynamics_stages{{1.0, 10000, 0.005}};
  std::size_t controller_steps = 10000;
  double controller_lr = 0.005;
  Vec target{1.0, -1.0};
  double horizon = 1.0;          // T
  std::size_t solver_steps = 100;  // RK4 steps over [0, T]
  LossMode loss_mode = LossMode::end_state;
  OptimizerKind optimizer = OptimizerKind::adam;
  bool time_feature = true;
  Vec x0_low{-2.0, -2.0};
  Vec x0_high{2.0, 2.0};
  std::uint64_t seed = 0;
  std::vector<std::size_t> controller_hidden{30};
  std::vector<std::size_t> dynamics_hidden{30};
  // Evaluate the model in a separate copy of the environment after every
  // alternation; does not touch the training interaction count.
  bool evaluate_each_alternation = true;

  double step_size() const { return horizon / static_cast<double>(solver_steps); }

  std::size_t dynamics_steps() const {
    std::size_t n = 0;
    for (const auto& s : dynamics_stages) n += s.steps;
    return n;
  }

  // Grid steps covering [0, h] (rounded to the nearest grid point).
  std::size_t grid_steps_for(double h) const {
    const auto k = static_cast<std::size_t>(std::llround(h / step_size()));
    return std::min(std::max<std::size_t>(k, 1), solver_steps);
  }

  void validate(std::size_t state_dim) const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (solver_steps == 0) throw ConfigError("solver_steps must be positive");
    if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
    if (!(controller_lr > 0.0)) throw ConfigError("controller_lr must be positive");
    if (target.size() != state_dim) throw ConfigError("target must have " + std::to_string(state_dim) + " entries");
    if (x0_low.size() != state_dim || x0_high.size() != state_dim)
      throw ConfigError("initial-state box must have " + std::to_string(state_dim) + " entries per bound");
    for (std::size_t i = 0; i < state_dim; ++i)
      if (!(x0_low[i] <= x0_high[i])) throw ConfigError("initial-state box has low > high");
    if (dynamics_stages.empty()) throw ConfigError("at least one dynamics stage is required");
    double prev = 0.0;
    for (const auto& s : dynamics_stages) {
      if (!(s.horizon > prev)) throw ConfigError("dynamics stage horizons must be positive and increasing");
      if (s.horizon > horizon * (1.0 + 1e-12)) throw ConfigError("dynamics stage horizon exceeds the control horizon");
      if (!(s.lr > 0.0)) throw ConfigError("dynamics stage learning rate must be positive");
      prev = s.horizon;
    }
  }
};

// ---------------------------------------------------------------------------
// Losses. The *_cotangents forms also write d(loss)/d(state_k), scaled by
// `weight`, into a flat (size * state_dim) buffer.

inline void require_same_grid(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size() || a.state_dim != b.state_dim)
    throw DimensionError("trajectories are on different grids (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + " points)");
  for (std::size_t k = 0; k < a.size(); ++k)
    if (std::abs(a.times[k] - b.times[k]) > 1e-12 * (1.0 + std::abs(a.times[k])))
      throw DimensionError("trajectories are on different time grids");
}

inline double dynamics_loss_cotangents(const Trajectory& pred, const Trajectory& real, double weight,
                                       std::span<double> cot) {
  const std::size_t count = pred.states.size();
  const double scale = 1.0 / static_cast<double>(count);
  double s = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const double diff = pred.states[k] - real.states[k];
    s += diff * diff;
    if (!cot.empty()) cot[k] = weight * 2.0 * diff * scale;
  }
  return s * scale;
}

// Mean squared error over every grid point and state coordinate.
inline double dynamics_loss(const Trajectory& pred, const Trajectory& real) {
  require_same_grid(pred, real);
  return dynamics_loss_cotangents(pred, real, 1.0, {});
}

inline double control_loss_cotangents(const Trajectory& pred, std::span<const double> target, LossMode mode,
                                      double weight, std::span<double> cot) {
  const std::size_t d = pred.state_dim;
  if (!cot.empty()) std::fill(cot.begin(), cot.end(), 0.0);
  if (mode == LossMode::end_state) {
    const std::size_t k = pred.size() - 1;
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = pred.states[k * d + i] - target[i];
      s += diff * diff;
      if (!cot.empty()) cot[k * d + i] = weight * 2.0 * diff / static_cast<double>(d);
    }
    return s / static_cast<double>(d);
  }
  const double scale = 1.0 / static_cast<double>(pred.states.size());
  double s = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k)
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = pred.states[k * d + i] - target[i];
      s += diff * diff;
      if (!cot.empty()) cot[k * d + i] = weight * 2.0 * diff * scale;
    }
  return s * scale;
}

// end_state: MSE(x_T, target). integral: mean over all grid states of
// MSE(x_k, target).
inline double control_loss(const Trajectory& pred, std::span<const double> target, LossMode mode) {
  if (target.size() != pred.state_dim) throw DimensionError("control_loss: target has wrong dimension");
  return control_loss_cotangents(pred, target, mode, 1.0, {});
}

// ---------------------------------------------------------------------------

inline std::vector<Vec> sample_initial_states(const TrainConfig& cfg, std::uint64_t seed, std::size_t count) {
  Rng rng(seed);
  std::vector<Vec> xs(count, Vec(cfg.x0_low.size()));
  for (auto& x : xs)
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(cfg.x0_low[i], cfg.x0_high[i]);
  return xs;
}

// Seed streams derived from the global seed.
struct SeedPlan {
  std::uint64_t controller;
  std::uint64_t dynamics;
  std::uint64_t initial_states;

  static SeedPlan from(std::uint64_t seed) {
    return {Rng::derive(seed, 1), Rng::derive(seed, 2), Rng::derive(seed, 3)};
  }
};

inline NocModel initial_model(const TrainConfig& cfg, const Environment& env) {
  const SeedPlan seeds = SeedPlan::from(cfg.seed);
  return NocModel::create(env.state_dim(), env.control_dim(), cfg.controller_hidden, cfg.dynamics_hidden,
                          cfg.time_feature, seeds.controller, seeds.dynamics);
}

struct PhaseResult {
  MlpParams params;
  std::vector<double> loss_curve;  // batch loss before each update
};

namespace detail {

template <class StepFn>
void run_phase_loop(std::size_t steps, std::size_t alternation, const char* phase, StepFn&& step) {
  for (std::size_t s = 0; s < steps; ++s) {
    try {
      step(s);
    } catch (const DivergenceError& e) {
      throw PhaseError(alternation, phase,
                       std::string(phase) + " phase diverged at alternation " + std::to_string(alternation) +
                           ", update " + std::to_string(s) + ": " + e.what());
    }
  }
}

inline void check_loss(double loss, std::size_t alternation, const char* phase, std::size_t update) {
  if (!std::isfinite(loss))
    throw PhaseError(alternation, phase,
                     std::string(phase) + " loss became non-finite at alternation " + std::to_string(alternation) +
                         ", update " + std::to_string(update));
}

}  // namespace detail

// Fits the dynamics learner to real trajectories recorded with the current
// (frozen) controller. Returns the new dynamics parameters.
inline PhaseResult train_dynamics_phase(const NocModel& model, const std::vector<Trajectory>& real,
                                        const TrainConfig& cfg, std::size_t alternation = 0) {
  if (real.empty()) throw ArgumentError("train_dynamics_phase: no real trajectories");
  for (const auto& r : real)
    if (r.steps() != cfg.solver_steps) throw DimensionError("train_dynamics_phase: real trajectory grid mismatch");
  NocModel work = model;
  PhaseResult result;
  OptimizerState opt = OptimizerState::for_params(work.dynamics);
  const std::size_t N = real.size();
  std::vector<RolloutRecord> records(N);
  std::vector<double> grads(work.dynamics.values.size());
  std::vector<double> cot;
  result.loss_curve.reserve(cfg.dynamics_steps());

  for (const DynamicsStage& stage : cfg.dynamics_stages) {
    const std::size_t m = cfg.grid_steps_for(stage.horizon);
    std::vector<Trajectory> targets;
    targets.reserve(N);
    for (const auto& r : real) targets.push_back(r.truncated(m));
    cot.assign((m + 1) * work.state_dim(), 0.0);

    detail::run_phase_loop(stage.steps, alternation, "dynamics", [&](std::size_t update) {
      const CoupledField field(work, GradTarget::dynamics);
      std::fill(grads.begin(), grads.end(), 0.0);
      double loss = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        record_rollout(field, targets[i].state(0), 0.0, targets[i].times[m], m, records[i]);
        loss += dynamics_loss_cotangents(records[i].trajectory, targets[i], 1.0 / static_cast<double>(N), cot);
        rollout_vjp(field, records[i], cot, grads);
      }
      loss /= static_cast<double>(N);
      detail::check_loss(loss, alternation, "dynamics", update);
      result.loss_curve.push_back(loss);
      std::tie(work.dynamics, opt) = optimizer_step(cfg.optimizer, std::move(work.dynamics), grads, std::move(opt), stage.lr);
    });
  }
  result.params = std::move(work.dynamics);
  return result;
}

// Trains the controller inside the learned dynamics only.
inline PhaseResult train_controller_phase(const NocModel& model, const std::vector<Vec>& x0s, const TrainConfig& cfg,
                                          std::size_t alternation = 0) {
  if (x0s.empty()) throw ArgumentError("train_controller_phase: empty batch");
  NocModel work = model;
  PhaseResult result;
  OptimizerState opt = OptimizerState::for_params(work.controller);
  const std::size_t N = x0s.size();
  const std::size_t n = cfg.solver_steps;
  std::vector<RolloutRecord> records(N);
  std::vector<double> grads(work.controller.values.size());
  std::vector<double> cot((n + 1) * work.state_dim());
  result.loss_curve.reserve(cfg.controller_steps);

  detail::run_phase_loop(cfg.controller_steps, alternation, "controller", [&](std::size_t update) {
    const CoupledField field(work, GradTarget::controller);
    std::fill(grads.begin(), grads.end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      record_rollout(field, x0s[i], 0.0, cfg.horizon, n, records[i]);
      loss += control_loss_cotangents(records[i].trajectory, cfg.target, cfg.loss_mode, 1.0 / static_cast<double>(N), cot);
      rollout_vjp(field, records[i], cot, grads);
    }
    loss /= static_cast<double>(N);
    detail::check_loss(loss, alternation, "controller", update);
    result.loss_curve.push_back(loss);
    std::tie(work.controller, opt) =
        optimizer_step(cfg.optimizer, std::move(work.controller), grads, std::move(opt), cfg.controller_lr);
  });
  result.params = std::move(work.controller);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation of a model against the true dynamics (uncounted).

struct EvalMetrics {
  double mean_endpoint_distance = 0.0;  // |x_T - target| under the true dynamics, batch mean
  double model_deviation = 0.0;         // dynamics_loss(learned rollout, true rollout), batch mean
  double true_control_loss = 0.0;       // control_loss on the true rollouts, batch mean
  Vec max_abs_state;                    // per coordinate, over all true rollouts
  std::vector<Trajectory> true_rollouts;
  std::vector<Trajectory> learned_rollouts;
};

inline EvalMetrics evaluate_model(const NocModel& model, const Environment& env, const std::vector<Vec>& x0s,
                                  const TrainConfig& cfg) {
  EvalMetrics m;
  const ControllerPolicy policy = model.policy();
  const CoupledField learned(model);
  m.max_abs_state.assign(model.state_dim(), 0.0);
  for (const Vec& x0 : x0s) {
    Trajectory t = rk4_rollout(Environment::ControlledField<ControllerPolicy>(env, policy), x0, 0.0, cfg.horizon,
                               cfg.solver_steps);
    Trajectory l = rk4_rollout(learned, x0, 0.0, cfg.horizon, cfg.solver_steps);
    double dist = 0.0;
    for (std::size_t i = 0; i < t.state_dim; ++i) {
      const double d = t.final_state()[i] - cfg.target[i];
      dist += d * d;
    }
    m.mean_endpoint_distance += std::sqrt(dist);
    m.model_deviation += dynamics_loss(l, t);
    m.true_control_loss += control_loss(t, cfg.target, cfg.loss_mode);
    for (std::size_t k = 0; k < t.size(); ++k)
      for (std::size_t i = 0; i < t.state_dim; ++i)
        m.max_abs_state[i] = std::max(m.max_abs_state[i], std::abs(t.state(k)[i]));
    m.true_rollouts.push_back(std::move(t));
    m.learned_rollouts.push_back(std::move(l));
  }
  const double inv = 1.0 / static_cast<double>(x0s.size());
  m.mean_endpoint_distance *= inv;
  m.model_deviation *= inv;
  m.true_control_loss *= inv;
  return m;
}

// ---------------------------------------------------------------------------

struct AlternationRecord {
  std::size_t index = 0;
  std::vector<double> dynamics_loss;
  std::vector<double> control_loss;
  std::vector<Trajectory> real_trajectories;       // collected with controller k
  std::vector<Trajectory> predicted_trajectories;  // learned dynamics k+1, controller k
  std::uint64_t env_rollouts = 0;                  // cumulative after this alternation
  std::uint64_t env_rollouts_before_controller = 0;
  std::uint64_t env_rollouts_after_controller = 0;
  bool controller_untouched_by_dynamics_phase = false;
  bool dynamics_untouched_by_controller_phase = false;
  bool evaluated = false;
  EvalMetrics eval;  // model after this alternation
};

struct AlternationLog {
  std::vector<Vec> initial_states;
  EvalMetrics initial_eval;
  std::vector<AlternationRecord> alternations;

  std::uint64_t env_rollouts() const { return alternations.empty() ? 0 : alternations.back().env_rollouts; }
};

struct TrainResult {
  NocModel model;
  AlternationLog log;
};

using AlternationCallback = std::function<void(const NocModel&, const AlternationRecord&)>;

inline TrainResult alternate_train(const TrainConfig& cfg, Environment& env, const AlternationCallback& on_alternation = {}) {
  cfg.validate(env.state_dim());
  TrainResult out{initial_model(cfg, env), {}};
  NocModel& model = out.model;
  AlternationLog& log = out.log;
  log.initial_states = sample_initial_states(cfg, SeedPlan::from(cfg.seed).initial_states, cfg.batch_size);
  const Environment eval_env = env.fresh_copy();
  if (cfg.evaluate_each_alternation) log.initial_eval = evaluate_model(model, eval_env, log.initial_states, cfg);

  for (std::size_t k = 0; k < cfg.alternations; ++k) {
    AlternationRecord rec;
    rec.index = k;

    // Real trajectories with the current controller.
    for (const Vec& x0 : log.initial_states)
      rec.real_trajectories.push_back(
          env.real_rollout(model.controller, model.time_feature, x0, 0.0, cfg.horizon, cfg.solver_steps));

    const MlpParams controller_before = model.controller;
    PhaseResult dyn = train_dynamics_phase(model, rec.real_trajectories, cfg, k);
    model.dynamics = std::move(dyn.params);
    rec.dynamics_loss = std::move(dyn.loss_curve);
    rec.controller_untouched_by_dynamics_phase = bit_identical(controller_before, model.controller);

    {
      const CoupledField field(model);
      for (const Vec& x0 : log.initial_states)
        rec.predicted_trajectories.push_back(rk4_rollout(field, x0, 0.0, cfg.horizon, cfg.solver_steps));
    }

    const MlpParams dynamics_before = model.dynamics;
    rec.env_rollouts_before_controller = env.rollouts_served();
    PhaseResult ctl = train_controller_phase(model, log.initial_states, cfg, k);
    model.controller = std::move(ctl.params);
    rec.control_loss = std::move(ctl.loss_curve);
    rec.env_rollouts_after_controller = env.rollouts_served();
    rec.dynamics_untouched_by_controller_phase = bit_identical(dynamics_before, model.dynamics);
    rec.env_rollouts = env.rollouts_served();

    if (cfg.evaluate_each_alternation) {
      rec.eval = evaluate_model(model, eval_env, log.initial_states, cfg);
      rec.evaluated = true;
    }
    if (on_alternation) on_alternation(model, rec);
    log.alternations.push_back(std::move(rec));
  }
  return out;
}

}  // namespace noc
