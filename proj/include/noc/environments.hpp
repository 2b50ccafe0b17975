#pragma once

// Ground-truth dynamics ("the environment"): a linear system x' = Ax + Bu
// and the cart-pole. Real rollouts are counted; the count is the only
// mutable state here and measures how much real data training consumed.

#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noc/core_math.hpp"
#include "noc/errors.hpp"
#include "noc/mlp.hpp"
#include "noc/odeint.hpp"

namespace noc {

enum class TaskKind { linear, cartpole };

inline const char* to_string(TaskKind k) { return k == TaskKind::linear ? "linear" : "cartpole"; }

inline TaskKind task_from_string(const std::string& s) {
  if (s == "linear") return TaskKind::linear;
  if (s == "cartpole") return TaskKind::cartpole;
  throw UnsupportedTaskError("unknown task '" + s + "'");
}

struct LinearParams {
  Mat A{{0.0, 1.0}, {1.0, 0.0}};
  Mat B{{1.0}, {0.0}};

  void validate() const {
    if (!A.square()) throw DimensionError("LinearParams: A must be square");
    if (B.rows() != A.rows()) throw DimensionError("LinearParams: B must have as many rows as A");
    if (B.cols() == 0) throw DimensionError("LinearParams: B needs at least one column");
  }
};

struct CartPoleParams {
  double gravity = 9.8;      // m/s^2
  double cart_mass = 1.0;    // kg
  double pole_mass = 0.1;    // kg
  double half_length = 0.5;  // m, pivot to pole centre of mass

  void validate() const {
    if (!(gravity > 0 && cart_mass > 0 && pole_mass > 0 && half_length > 0))
      throw ArgumentError("CartPoleParams: all parameters must be positive");
  }
};

inline void linear_derivative_into(const LinearParams& p, std::span<const double> x, std::span<const double> u,
                                   std::span<double> out) {
  const std::size_t n = p.A.rows();
  const std::size_t m = p.B.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += p.A(i, j) * x[j];
    for (std::size_t j = 0; j < m; ++j) s += p.B(i, j) * u[j];
    out[i] = s;
  }
}

inline Vec linear_derivative(const LinearParams& p, std::span<const double> x, std::span<const double> u) {
  if (x.size() != p.A.rows() || u.size() != p.B.cols())
    throw DimensionError("linear_derivative: expected x of size " + std::to_string(p.A.rows()) + " and u of size " +
                         std::to_string(p.B.cols()));
  Vec out(x.size());
  linear_derivative_into(p, x, u, out);
  return out;
}

// State (x, x_dot, theta, theta_dot), theta = 0 upright. The angular
// equation does not involve x_ddot, so theta_ddot is computed first and
// substituted into the cart equation.
inline void cartpole_derivative_into(const CartPoleParams& p, std::span<const double> s, double force,
                                     std::span<double> out) {
  if (s.size() < 4 || out.size() < 4) throw DimensionError("cartpole: state must have 4 entries");
  const double total = p.cart_mass + p.pole_mass;
  const double theta = s[2];
  const double theta_dot = s[3];
  const double sin_t = std::sin(theta);
  const double cos_t = std::cos(theta);
  const double denom = p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total);
  assert(denom > 0.0);
  const double theta_ddot =
      (p.gravity * sin_t + cos_t * ((-force - p.pole_mass * p.half_length * theta_dot * theta_dot * sin_t) / total)) /
      denom;
  const double x_ddot =
      (force + p.pole_mass * p.half_length * (theta_dot * theta_dot * sin_t - theta_ddot * cos_t)) / total;
  out[0] = s[1];
  out[1] = x_ddot;
  out[2] = theta_dot;
  out[3] = theta_ddot;
}

inline Vec cartpole_derivative(const CartPoleParams& p, std::span<const double> s, double force) {
  if (s.size() != 4) throw DimensionError("cartpole_derivative: state must have 4 entries");
  Vec out(4);
  cartpole_derivative_into(p, s, force, out);
  return out;
}

// Total mechanical energy of the unforced cart-pole (pole as a uniform rod
// of length 2l). Conserved when the force is zero.
inline double cartpole_energy(const CartPoleParams& p, std::span<const double> s) {
  const double l = p.half_length;
  const double vx = s[1] + l * s[3] * std::cos(s[2]);
  const double vy = l * s[3] * std::sin(s[2]);
  return 0.5 * p.cart_mass * s[1] * s[1] + 0.5 * p.pole_mass * (vx * vx + vy * vy) +
         p.pole_mass * l * l * s[3] * s[3] / 6.0 + p.pole_mass * p.gravity * l * std::cos(s[2]);
}

// Feedback u = net(x[, t]).
class ControllerPolicy {
 public:
  ControllerPolicy(const MlpParams& net, bool time_feature) : net_(&net), time_feature_(time_feature) {}

  std::size_t input_dim() const { return net_->spec.input_dim(); }
  std::size_t control_dim() const { return net_->spec.output_dim(); }

  void operator()(std::span<const double> x, double t, std::span<double> u) const {
    Vec in(x.begin(), x.end());
    if (time_feature_) in.push_back(t);
    Vec acts(net_->spec.activation_count());
    mlp_forward_into(*net_, in, acts);
    std::copy(acts.end() - static_cast<std::ptrdiff_t>(u.size()), acts.end(), u.begin());
  }

 private:
  const MlpParams* net_;
  bool time_feature_;
};

class Environment {
 public:
  static Environment linear(LinearParams p = {}) {
    p.validate();
    return Environment(TaskKind::linear, std::move(p), {});
  }
  static Environment cartpole(CartPoleParams p = {}) {
    p.validate();
    return Environment(TaskKind::cartpole, {}, p);
  }

  Environment(const Environment& o) = delete;
  Environment& operator=(const Environment&) = delete;
  Environment(Environment&& o) noexcept
      : kind_(o.kind_), linear_(std::move(o.linear_)), cartpole_(o.cartpole_), served_(o.served_.load()) {}

  // Same dynamics, counter at zero.
  Environment fresh_copy() const { return Environment(kind_, linear_, cartpole_); }

  TaskKind kind() const { return kind_; }
  const LinearParams& linear_params() const { return linear_; }
  const CartPoleParams& cartpole_params() const { return cartpole_; }

  std::size_t state_dim() const { return kind_ == TaskKind::linear ? linear_.A.rows() : 4; }
  std::size_t control_dim() const { return kind_ == TaskKind::linear ? linear_.B.cols() : 1; }

  void derivative(std::span<const double> x, std::span<const double> u, std::span<double> out) const {
    if (kind_ == TaskKind::linear) linear_derivative_into(linear_, x, u, out);
    else cartpole_derivative_into(cartpole_, x, u[0], out);
  }

  std::uint64_t rollouts_served() const { return served_.load(); }

  // RK4 rollout of the true dynamics under u = policy(x, t), evaluated at
  // every stage. Counts as one interaction with the environment.
  template <class Policy>
  Trajectory real_rollout(const Policy& policy, std::span<const double> x0, double t0, double t1,
                          std::size_t n_steps) {
    if (x0.size() != state_dim()) throw DimensionError("real_rollout: x0 has wrong dimension");
    if (policy.control_dim() != control_dim()) throw DimensionError("real_rollout: controller output has wrong dimension");
    served_.fetch_add(1);
    return rk4_rollout(ControlledField<Policy>(*this, policy), x0, t0, t1, n_steps);
  }

  Trajectory real_rollout(const MlpParams& controller, bool time_feature, std::span<const double> x0, double t0,
                          double t1, std::size_t n_steps) {
    const std::size_t expected = state_dim() + (time_feature ? 1 : 0);
    if (controller.spec.input_dim() != expected)
      throw DimensionError("real_rollout: controller takes " + std::to_string(controller.spec.input_dim()) +
                           " inputs, expected " + std::to_string(expected));
    return real_rollout(ControllerPolicy(controller, time_feature), x0, t0, t1, n_steps);
  }

  // True closed-loop field x' = f(x, policy(x, t)); usable without counting.
  template <class Policy>
  class ControlledField {
   public:
    ControlledField(const Environment& env, const Policy& policy) : env_(&env), policy_(&policy) {}
    std::size_t state_dim() const { return env_->state_dim(); }
    std::size_t control_dim() const { return env_->control_dim(); }
    ParamSets parameter_sets() const { return ParamSets::none; }
    void evaluate(std::span<const double> x, double t, std::span<double> out) const {
      double u_buf[8];
      std::vector<double> u_heap;
      std::span<double> u;
      if (control_dim() <= 8) {
        u = std::span<double>(u_buf, control_dim());
      } else {
        u_heap.resize(control_dim());
        u = u_heap;
      }
      (*policy_)(x, t, u);
      env_->derivative(x, u, out);
    }
    void control(std::span<const double> x, double t, std::span<double> u) const { (*policy_)(x, t, u); }

   private:
    const Environment* env_;
    const Policy* policy_;
  };

 private:
  Environment(TaskKind kind, LinearParams lin, CartPoleParams cp)
      : kind_(kind), linear_(std::move(lin)), cartpole_(cp), served_(0) {}

  TaskKind kind_;
  LinearParams linear_;
  CartPoleParams cartpole_;
  std::atomic<std::uint64_t> served_;
};

}  // namespace noc
