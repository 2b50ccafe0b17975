#pragma once

// Fixed-step classical RK4 rollouts and exact reverse-mode gradients of the
// discrete rollout (backpropagation through the unrolled steps).
//
// A field maps (state, t) to a state derivative. Differentiable fields also
// record whatever they need during evaluation into a caller-provided tape
// and can later pull a cotangent back to the state and to their parameters.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "noc/core_math.hpp"
#include "noc/errors.hpp"
#include "noc/mlp.hpp"

namespace noc {

// Which trainable parameter sets a field closes over.
enum class ParamSets { none, controller, dynamics, both };

template <class F>
concept VectorField = requires(const F& f, std::span<const double> x, double t, std::span<double> out) {
  { f.state_dim() } -> std::convertible_to<std::size_t>;
  { f.control_dim() } -> std::convertible_to<std::size_t>;
  { f.parameter_sets() } -> std::convertible_to<ParamSets>;
  f.evaluate(x, t, out);
  f.control(x, t, out);
};

template <class F>
concept DifferentiableField =
    VectorField<F> && requires(const F& f, std::span<const double> x, double t, std::span<double> out,
                               std::span<const double> ctape, std::span<double> tape, std::span<const double> up) {
      { f.tape_size() } -> std::convertible_to<std::size_t>;
      { f.scratch_size() } -> std::convertible_to<std::size_t>;
      { f.param_count() } -> std::convertible_to<std::size_t>;
      f.evaluate_recording(x, t, out, tape);
      // d_x (out) is overwritten, d_params (tape slot) is accumulated.
      f.backward(ctape, up, out, tape, tape);
    };

// One rollout on a uniform grid. States and controls are stored flat,
// row k holding grid point k.
struct Trajectory {
  std::size_t state_dim = 0;
  std::size_t control_dim = 0;
  std::vector<double> times;
  std::vector<double> states;
  std::vector<double> controls;  // empty when the field has no controller

  std::size_t size() const noexcept { return times.size(); }
  std::size_t steps() const noexcept { return times.empty() ? 0 : times.size() - 1; }

  std::span<const double> state(std::size_t k) const { return {states.data() + k * state_dim, state_dim}; }
  std::span<double> state(std::size_t k) { return {states.data() + k * state_dim, state_dim}; }
  std::span<const double> control(std::size_t k) const { return {controls.data() + k * control_dim, control_dim}; }
  std::span<const double> final_state() const { return state(size() - 1); }

  // The first `steps + 1` grid points.
  Trajectory truncated(std::size_t steps) const {
    if (steps + 1 > size()) throw ArgumentError("Trajectory::truncated: longer than trajectory");
    Trajectory t;
    t.state_dim = state_dim;
    t.control_dim = control_dim;
    t.times.assign(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(steps + 1));
    t.states.assign(states.begin(), states.begin() + static_cast<std::ptrdiff_t>((steps + 1) * state_dim));
    if (!controls.empty())
      t.controls.assign(controls.begin(), controls.begin() + static_cast<std::ptrdiff_t>((steps + 1) * control_dim));
    return t;
  }
};

inline std::vector<double> uniform_grid(double t0, double t1, std::size_t n_steps) {
  std::vector<double> times(n_steps + 1);
  const double h = (t1 - t0) / static_cast<double>(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) times[k] = t0 + h * static_cast<double>(k);
  times[n_steps] = t1;
  return times;
}

namespace detail {

inline void check_grid(double t0, double t1, std::size_t n_steps) {
  if (!(t1 > t0)) throw ArgumentError("rk4 rollout: require t1 > t0");
  if (n_steps == 0) throw ArgumentError("rk4 rollout: n_steps must be positive");
}

inline void check_finite_state(std::span<const double> x, std::size_t step) {
  if (!all_finite(x))
    throw DivergenceError(step, "rollout diverged: non-finite state at step " + std::to_string(step));
}

template <VectorField F>
Trajectory start_trajectory(const F& field, std::span<const double> x0, double t0, double t1, std::size_t n_steps) {
  check_grid(t0, t1, n_steps);
  const std::size_t d = field.state_dim();
  if (x0.size() != d) throw DimensionError("rk4 rollout: x0 has wrong dimension");
  Trajectory traj;
  traj.state_dim = d;
  traj.control_dim = field.control_dim();
  traj.times = uniform_grid(t0, t1, n_steps);
  traj.states.assign((n_steps + 1) * d, 0.0);
  traj.controls.assign((n_steps + 1) * traj.control_dim, 0.0);
  std::copy(x0.begin(), x0.end(), traj.states.begin());
  return traj;
}

template <VectorField F>
void record_control(const F& field, Trajectory& traj, std::size_t k) {
  if (traj.control_dim == 0) return;
  field.control(traj.state(k), traj.times[k],
                std::span<double>(traj.controls.data() + k * traj.control_dim, traj.control_dim));
}

}  // namespace detail

// Classical fourth-order Runge-Kutta on a uniform grid of n_steps steps.
template <VectorField F>
Trajectory rk4_rollout(const F& field, std::span<const double> x0, double t0, double t1, std::size_t n_steps) {
  Trajectory traj = detail::start_trajectory(field, x0, t0, t1, n_steps);
  const std::size_t d = traj.state_dim;
  const double h = (t1 - t0) / static_cast<double>(n_steps);
  std::vector<double> buf(5 * d);
  std::span<double> k1(buf.data(), d), k2(buf.data() + d, d), k3(buf.data() + 2 * d, d), k4(buf.data() + 3 * d, d),
      y(buf.data() + 4 * d, d);

  detail::record_control(field, traj, 0);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = traj.times[k];
    std::span<const double> x = traj.state(k);
    field.evaluate(x, t, k1);
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + 0.5 * h * k1[i];
    field.evaluate(y, t + 0.5 * h, k2);
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + 0.5 * h * k2[i];
    field.evaluate(y, t + 0.5 * h, k3);
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + h * k3[i];
    field.evaluate(y, t + h, k4);
    std::span<double> xn = traj.state(k + 1);
    for (std::size_t i = 0; i < d; ++i) xn[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    detail::check_finite_state(xn, k + 1);
    detail::record_control(field, traj, k + 1);
  }
  return traj;
}

// A rollout together with the per-stage tapes needed to differentiate it.
// Reusable across calls with the same shapes to avoid reallocations.
struct RolloutRecord {
  Trajectory trajectory;
  double step = 0.0;
  std::size_t tape_stride = 0;
  std::vector<double> tapes;  // n_steps * 4 * tape_stride
  std::vector<double> work;
};

template <DifferentiableField F>
void record_rollout(const F& field, std::span<const double> x0, double t0, double t1, std::size_t n_steps,
                    RolloutRecord& rec) {
  rec.trajectory = detail::start_trajectory(field, x0, t0, t1, n_steps);
  Trajectory& traj = rec.trajectory;
  const std::size_t d = traj.state_dim;
  const double h = (t1 - t0) / static_cast<double>(n_steps);
  rec.step = h;
  rec.tape_stride = field.tape_size();
  rec.tapes.resize(n_steps * 4 * rec.tape_stride);
  rec.work.resize(5 * d);
  std::span<double> k1(rec.work.data(), d), k2(rec.work.data() + d, d), k3(rec.work.data() + 2 * d, d),
      k4(rec.work.data() + 3 * d, d), y(rec.work.data() + 4 * d, d);
  auto tape = [&](std::size_t k, std::size_t stage) {
    return std::span<double>(rec.tapes.data() + (4 * k + stage) * rec.tape_stride, rec.tape_stride);
  };

  detail::record_control(field, traj, 0);
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = traj.times[k];
    std::span<const double> x = traj.state(k);
    field.evaluate_recording(x, t, k1, tape(k, 0));
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + 0.5 * h * k1[i];
    field.evaluate_recording(y, t + 0.5 * h, k2, tape(k, 1));
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + 0.5 * h * k2[i];
    field.evaluate_recording(y, t + 0.5 * h, k3, tape(k, 2));
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + h * k3[i];
    field.evaluate_recording(y, t + h, k4, tape(k, 3));
    std::span<double> xn = traj.state(k + 1);
    for (std::size_t i = 0; i < d; ++i) xn[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    detail::check_finite_state(xn, k + 1);
    detail::record_control(field, traj, k + 1);
  }
}

// Gradient of sum_k <cotangent_k, state_k> through the recorded rollout.
// `cotangents` is flat, (n_steps + 1) * state_dim. Parameter gradients are
// accumulated into d_params (length field.param_count()); the gradient with
// respect to x0 is returned.
template <DifferentiableField F>
Vec rollout_vjp(const F& field, const RolloutRecord& rec, std::span<const double> cotangents,
                std::span<double> d_params) {
  const Trajectory& traj = rec.trajectory;
  const std::size_t d = traj.state_dim;
  const std::size_t n = traj.steps();
  if (cotangents.size() != traj.size() * d)
    throw DimensionError("rollout_vjp: cotangent count does not match the grid (" + std::to_string(cotangents.size()) +
                         " vs " + std::to_string(traj.size() * d) + ")");
  if (d_params.size() != field.param_count()) throw DimensionError("rollout_vjp: parameter gradient has wrong length");
  const double h = rec.step;

  std::vector<double> buf(6 * d + field.scratch_size());
  std::span<double> adj(buf.data(), d), a1(buf.data() + d, d), a2(buf.data() + 2 * d, d), a3(buf.data() + 3 * d, d),
      a4(buf.data() + 4 * d, d), gx(buf.data() + 5 * d, d), scratch(buf.data() + 6 * d, field.scratch_size());
  auto tape = [&](std::size_t k, std::size_t stage) {
    return std::span<const double>(rec.tapes.data() + (4 * k + stage) * rec.tape_stride, rec.tape_stride);
  };

  for (std::size_t i = 0; i < d; ++i) adj[i] = cotangents[n * d + i];
  for (std::size_t k = n; k-- > 0;) {
    // x_{k+1} = x_k + h/6 (k1 + 2 k2 + 2 k3 + k4)
    for (std::size_t i = 0; i < d; ++i) {
      a1[i] = h / 6.0 * adj[i];
      a2[i] = h / 3.0 * adj[i];
      a3[i] = h / 3.0 * adj[i];
      a4[i] = h / 6.0 * adj[i];
    }
    // k4 = f(x + h k3)
    field.backward(tape(k, 3), a4, gx, d_params, scratch);
    for (std::size_t i = 0; i < d; ++i) {
      adj[i] += gx[i];
      a3[i] += h * gx[i];
    }
    // k3 = f(x + h/2 k2)
    field.backward(tape(k, 2), a3, gx, d_params, scratch);
    for (std::size_t i = 0; i < d; ++i) {
      adj[i] += gx[i];
      a2[i] += 0.5 * h * gx[i];
    }
    // k2 = f(x + h/2 k1)
    field.backward(tape(k, 1), a2, gx, d_params, scratch);
    for (std::size_t i = 0; i < d; ++i) {
      adj[i] += gx[i];
      a1[i] += 0.5 * h * gx[i];
    }
    // k1 = f(x)
    field.backward(tape(k, 0), a1, gx, d_params, scratch);
    for (std::size_t i = 0; i < d; ++i) adj[i] += gx[i] + cotangents[k * d + i];
  }
  return Vec(adj.begin(), adj.end());
}

// Convenience form: records the rollout, then pulls the cotangents back.
template <DifferentiableField F>
Vec rollout_vjp(const F& field, std::span<const double> x0, double t0, double t1, std::size_t n_steps,
                std::span<const double> cotangents, std::span<double> d_params) {
  RolloutRecord rec;
  record_rollout(field, x0, t0, t1, n_steps, rec);
  return rollout_vjp(field, rec, cotangents, d_params);
}

// Plain closure field for tests and true dynamics without a controller.
class FunctionField {
 public:
  using Fn = std::function<void(std::span<const double>, double, std::span<double>)>;
  FunctionField(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

  std::size_t state_dim() const { return dim_; }
  std::size_t control_dim() const { return 0; }
  ParamSets parameter_sets() const { return ParamSets::none; }
  void evaluate(std::span<const double> x, double t, std::span<double> out) const { fn_(x, t, out); }
  void control(std::span<const double>, double, std::span<double>) const {}

 private:
  std::size_t dim_;
  Fn fn_;
};

// Neural ODE dx/dt = net(x) or net(x, t).
class MlpField {
 public:
  MlpField(const MlpParams& net, bool time_feature) : net_(&net), time_feature_(time_feature) {
    const std::size_t in = net.spec.input_dim();
    if (in != net.spec.output_dim() + (time_feature ? 1 : 0))
      throw DimensionError("MlpField: network input must be state dim (+1 with time feature)");
  }

  std::size_t state_dim() const { return net_->spec.output_dim(); }
  std::size_t control_dim() const { return 0; }
  ParamSets parameter_sets() const { return ParamSets::dynamics; }
  std::size_t param_count() const { return net_->values.size(); }
  std::size_t tape_size() const { return net_->spec.activation_count(); }
  std::size_t scratch_size() const { return net_->spec.scratch_size() + net_->spec.input_dim(); }

  void evaluate(std::span<const double> x, double t, std::span<double> out) const {
    std::vector<double> tape(tape_size());
    evaluate_recording(x, t, out, tape);
  }
  void control(std::span<const double>, double, std::span<double>) const {}

  void evaluate_recording(std::span<const double> x, double t, std::span<double> out, std::span<double> tape) const {
    const std::size_t d = state_dim();
    std::copy(x.begin(), x.end(), tape.begin());
    if (time_feature_) tape[d] = t;
    mlp_forward_into(*net_, tape.subspan(0, net_->spec.input_dim()), tape);
    std::copy(tape.end() - static_cast<std::ptrdiff_t>(d), tape.end(), out.begin());
  }

  void backward(std::span<const double> tape, std::span<const double> upstream, std::span<double> d_x,
                std::span<double> d_params, std::span<double> scratch) const {
    const std::size_t in = net_->spec.input_dim();
    std::span<double> d_in = scratch.subspan(0, in);
    mlp_backward(*net_, tape, upstream, d_in, d_params, scratch.subspan(in));
    std::copy(d_in.begin(), d_in.begin() + static_cast<std::ptrdiff_t>(state_dim()), d_x.begin());
  }

 private:
  const MlpParams* net_;
  bool time_feature_;
};

// ---------------------------------------------------------------------------
// CSV export: header t,x1..xd,u1..um, 17 significant digits.

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << 't';
  for (std::size_t i = 0; i < traj.state_dim; ++i) os << ",x" << i + 1;
  const std::size_t m = traj.controls.empty() ? 0 : traj.control_dim;
  for (std::size_t j = 0; j < m; ++j) os << ",u" << j + 1;
  os << '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    os << format_double(traj.times[k]);
    for (double v : traj.state(k)) os << ',' << format_double(v);
    if (m > 0)
      for (double v : traj.control(k)) os << ',' << format_double(v);
    os << '\n';
  }
}

inline Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ArgumentError("trajectory CSV: empty input");
  Trajectory traj;
  {
    std::stringstream hs(line);
    std::string col;
    std::getline(hs, col, ',');
    if (col != "t") throw ArgumentError("trajectory CSV: first column must be t");
    while (std::getline(hs, col, ',')) {
      if (!col.empty() && col[0] == 'x') ++traj.state_dim;
      else if (!col.empty() && col[0] == 'u') ++traj.control_dim;
      else throw ArgumentError("trajectory CSV: unexpected column '" + col + "'");
    }
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream rs(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(rs, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != 1 + traj.state_dim + traj.control_dim) throw ArgumentError("trajectory CSV: ragged row");
    traj.times.push_back(row[0]);
    traj.states.insert(traj.states.end(), row.begin() + 1, row.begin() + 1 + static_cast<std::ptrdiff_t>(traj.state_dim));
    traj.controls.insert(traj.controls.end(), row.begin() + 1 + static_cast<std::ptrdiff_t>(traj.state_dim), row.end());
  }
  return traj;
}

}  // namespace noc
