#pragma once

// Analytic minimum-energy steering law for x' = Ax + Bu over [0, T]:
//
//   u*(t) = B^T e^{A^T (T - t)} W(T)^{-1} v(T),   v(T) = x* - e^{AT} x0,
//   W(T)  = int_0^T e^{At} B B^T e^{A^T t} dt     (controllability Gramian)
//
// and the pointwise comparison of a learned controller against it.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "noc/core_math.hpp"
#include "noc/environments.hpp"
#include "noc/errors.hpp"
#include "noc/odeint.hpp"

namespace noc {

// Simpson quadrature at n_panels and 2*n_panels; returns the finer value.
// Throws QuadratureError when the two differ by 1e-8 or more.
inline Mat gramian(const Mat& A, const Mat& B, double T, std::size_t n_panels = 256) {
  if (!A.square() || B.rows() != A.rows()) throw DimensionError("gramian: A must be square with B matching its rows");
  if (!(T > 0.0)) throw ArgumentError("gramian: horizon must be positive");
  const Mat bbt = B * B.transpose();
  auto integrand = [&](double t) {
    const Mat e = mat_exp(A, t);
    return e * bbt * e.transpose();
  };
  Mat w = simpson_with_doubling(integrand, 0.0, T, n_panels, 1e-8).value;
  // Symmetrize away rounding; the integrand is symmetric at every node.
  const Mat wt = w.transpose();
  w += wt;
  w *= 0.5;
  return w;
}

class OptimalControlLaw {
 public:
  static OptimalControlLaw build(const Mat& A, const Mat& B, double T, std::span<const double> x0,
                                 std::span<const double> x_star, std::size_t n_panels = 256) {
    if (x0.size() != A.rows() || x_star.size() != A.rows())
      throw DimensionError("optimal_control_law: x0 and x_star must match the state dimension");
    OptimalControlLaw law;
    law.A_ = A;
    law.B_ = B;
    law.Bt_ = B.transpose();
    law.At_ = A.transpose();
    law.T_ = T;
    law.x0_.assign(x0.begin(), x0.end());
    law.x_star_.assign(x_star.begin(), x_star.end());
    law.W_ = gramian(A, B, T, n_panels);
    try {
      (void)cholesky(law.W_);
    } catch (const SingularMatrixError&) {
      throw SingularMatrixError("optimal_control_law: Gramian is not positive definite (system is not controllable)");
    }
    const Vec free = mat_exp(A, T) * std::span<const double>(law.x0_);
    law.v_.resize(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) law.v_[i] = law.x_star_[i] - free[i];
    try {
      law.w_inv_v_ = solve_linear(law.W_, law.v_);
    } catch (const SingularMatrixError&) {
      throw SingularMatrixError("optimal_control_law: Gramian is singular (system is not controllable)");
    }
    return law;
  }

  std::size_t state_dim() const { return A_.rows(); }
  std::size_t control_dim() const { return B_.cols(); }
  double horizon() const { return T_; }
  const Mat& gramian_matrix() const { return W_; }
  const Vec& free_evolution_gap() const { return v_; }
  const Vec& gramian_solve() const { return w_inv_v_; }
  const Vec& x0() const { return x0_; }
  const Vec& target() const { return x_star_; }

  Vec control(double t) const { return Bt_ * std::span<const double>(mat_exp(At_, T_ - t) * std::span<const double>(w_inv_v_)); }

  // Policy interface; the law is open-loop and ignores the state.
  void operator()(std::span<const double>, double t, std::span<double> u) const {
    const Vec c = control(t);
    std::copy(c.begin(), c.end(), u.begin());
  }

 private:
  Mat A_, B_, At_, Bt_, W_;
  double T_ = 0.0;
  Vec x0_, x_star_, v_, w_inv_v_;
};

inline OptimalControlLaw optimal_control_law(const Mat& A, const Mat& B, double T, std::span<const double> x0,
                                             std::span<const double> x_star) {
  return OptimalControlLaw::build(A, B, T, x0, x_star);
}

struct ComparisonReport {
  double trajectory_mse = 0.0;
  double control_mse = 0.0;
  double noc_endpoint_error = 0.0;      // |x_T - x*| under the learned controller
  double optimal_endpoint_error = 0.0;  // |x_T - x*| under the analytic law
  Trajectory noc;
  Trajectory optimal;
};

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Pointwise comparison of two rollouts on the same grid.
inline ComparisonReport compare_trajectories(Trajectory noc, Trajectory optimal, std::span<const double> x_star) {
  if (noc.size() != optimal.size() || noc.state_dim != optimal.state_dim || noc.control_dim != optimal.control_dim)
    throw DimensionError("compare_controllers: trajectories differ in shape");
  ComparisonReport r;
  double se = 0.0;
  for (std::size_t k = 0; k < noc.states.size(); ++k) se += (noc.states[k] - optimal.states[k]) * (noc.states[k] - optimal.states[k]);
  r.trajectory_mse = se / static_cast<double>(noc.states.size());
  double ce = 0.0;
  for (std::size_t k = 0; k < noc.controls.size(); ++k)
    ce += (noc.controls[k] - optimal.controls[k]) * (noc.controls[k] - optimal.controls[k]);
  r.control_mse = noc.controls.empty() ? 0.0 : ce / static_cast<double>(noc.controls.size());
  r.noc_endpoint_error = distance(noc.final_state(), x_star);
  r.optimal_endpoint_error = distance(optimal.final_state(), x_star);
  r.noc = std::move(noc);
  r.optimal = std::move(optimal);
  return r;
}

// Rolls both controllers through the true linear dynamics from the law's
// x0 on a uniform grid over [0, T]. Does not count as environment use.
template <class Policy>
ComparisonReport compare_controllers(const OptimalControlLaw& law, const Policy& noc, const Environment& env,
                                     std::size_t n_steps) {
  if (env.state_dim() != law.state_dim() || env.control_dim() != law.control_dim() ||
      noc.control_dim() != law.control_dim())
    throw DimensionError("compare_controllers: controller, law and environment dimensions differ");
  Trajectory a = rk4_rollout(Environment::ControlledField<Policy>(env, noc), law.x0(), 0.0, law.horizon(), n_steps);
  Trajectory b =
      rk4_rollout(Environment::ControlledField<OptimalControlLaw>(env, law), law.x0(), 0.0, law.horizon(), n_steps);
  return compare_trajectories(std::move(a), std::move(b), law.target());
}

}  // namespace noc
