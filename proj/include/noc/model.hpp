#pragma once

// The coupled model: a controller u = h(x, t) whose output feeds a learned
// dynamics network x' = g(x, u, t). Integrating g(x, h(x, t), t) predicts
// where the controlled system ends up.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noc/environments.hpp"
#include "noc/errors.hpp"
#include "noc/mlp.hpp"
#include "noc/odeint.hpp"

namespace noc {

struct NocModel {
  MlpParams controller;
  MlpParams dynamics;
  bool time_feature = true;

  std::size_t state_dim() const { return dynamics.spec.output_dim(); }
  std::size_t control_dim() const { return controller.spec.output_dim(); }
  std::size_t time_inputs() const { return time_feature ? 1 : 0; }

  void validate() const {
    controller.spec.validate();
    dynamics.spec.validate();
    const std::size_t n = state_dim();
    const std::size_t m = control_dim();
    if (controller.spec.input_dim() != n + time_inputs())
      throw DimensionError("NocModel: controller expects " + std::to_string(controller.spec.input_dim()) +
                           " inputs, state needs " + std::to_string(n + time_inputs()));
    if (dynamics.spec.input_dim() != n + m + time_inputs())
      throw DimensionError("NocModel: dynamics learner expects " + std::to_string(dynamics.spec.input_dim()) +
                           " inputs, state+control needs " + std::to_string(n + m + time_inputs()));
    if (controller.values.size() != controller.spec.param_count() || dynamics.values.size() != dynamics.spec.param_count())
      throw DimensionError("NocModel: parameter vector does not match its spec");
  }

  static MlpSpec controller_spec(std::size_t n, std::size_t m, const std::vector<std::size_t>& hidden, bool time_feature) {
    MlpSpec s;
    s.layer_sizes.push_back(n + (time_feature ? 1 : 0));
    s.layer_sizes.insert(s.layer_sizes.end(), hidden.begin(), hidden.end());
    s.layer_sizes.push_back(m);
    return s;
  }

  static MlpSpec dynamics_spec(std::size_t n, std::size_t m, const std::vector<std::size_t>& hidden, bool time_feature) {
    MlpSpec s;
    s.layer_sizes.push_back(n + m + (time_feature ? 1 : 0));
    s.layer_sizes.insert(s.layer_sizes.end(), hidden.begin(), hidden.end());
    s.layer_sizes.push_back(n);
    return s;
  }

  static NocModel create(std::size_t n, std::size_t m, const std::vector<std::size_t>& controller_hidden,
                         const std::vector<std::size_t>& dynamics_hidden, bool time_feature,
                         std::uint64_t controller_seed, std::uint64_t dynamics_seed) {
    NocModel model{mlp_init(controller_spec(n, m, controller_hidden, time_feature), controller_seed),
                   mlp_init(dynamics_spec(n, m, dynamics_hidden, time_feature), dynamics_seed), time_feature};
    model.validate();
    return model;
  }

  ControllerPolicy policy() const { return ControllerPolicy(controller, time_feature); }
};

// Which parameter gradients the coupled field accumulates.
enum class GradTarget { controller, dynamics, both };

// x, t -> g(x, h(x, t), t). Gradient layout: controller parameters, then
// dynamics parameters, restricted to the selected target.
class CoupledField {
 public:
  explicit CoupledField(const NocModel& model, GradTarget target = GradTarget::both)
      : model_(&model), target_(target) {
    model.validate();
    n_ = model.state_dim();
    m_ = model.control_dim();
    tf_ = model.time_inputs();
    ctrl_acts_ = model.controller.spec.activation_count();
    dyn_acts_ = model.dynamics.spec.activation_count();
  }

  std::size_t state_dim() const { return n_; }
  std::size_t control_dim() const { return m_; }
  ParamSets parameter_sets() const { return ParamSets::both; }
  GradTarget target() const { return target_; }

  std::size_t param_count() const {
    switch (target_) {
      case GradTarget::controller: return model_->controller.values.size();
      case GradTarget::dynamics: return model_->dynamics.values.size();
      default: return model_->controller.values.size() + model_->dynamics.values.size();
    }
  }
  std::size_t tape_size() const { return ctrl_acts_ + dyn_acts_; }
  std::size_t scratch_size() const {
    return (n_ + m_ + tf_) + (n_ + tf_) +
           std::max(model_->controller.spec.scratch_size(), model_->dynamics.spec.scratch_size());
  }

  void evaluate(std::span<const double> x, double t, std::span<double> out) const {
    std::vector<double> tape(tape_size());
    evaluate_recording(x, t, out, tape);
  }

  void control(std::span<const double> x, double t, std::span<double> u) const {
    std::vector<double> acts(ctrl_acts_);
    forward_controller(x, t, acts);
    std::copy(acts.end() - static_cast<std::ptrdiff_t>(m_), acts.end(), u.begin());
  }

  void evaluate_recording(std::span<const double> x, double t, std::span<double> out, std::span<double> tape) const {
    std::span<double> ca = tape.subspan(0, ctrl_acts_);
    std::span<double> da = tape.subspan(ctrl_acts_, dyn_acts_);
    forward_controller(x, t, ca);
    std::copy(x.begin(), x.end(), da.begin());
    std::copy(ca.end() - static_cast<std::ptrdiff_t>(m_), ca.end(), da.begin() + static_cast<std::ptrdiff_t>(n_));
    if (tf_) da[n_ + m_] = t;
    mlp_forward_into(model_->dynamics, da.subspan(0, n_ + m_ + tf_), da);
    std::copy(da.end() - static_cast<std::ptrdiff_t>(n_), da.end(), out.begin());
  }

  void backward(std::span<const double> tape, std::span<const double> upstream, std::span<double> d_x,
                std::span<double> d_params, std::span<double> scratch) const {
    std::span<const double> ca = tape.subspan(0, ctrl_acts_);
    std::span<const double> da = tape.subspan(ctrl_acts_, dyn_acts_);
    std::span<double> d_dyn_in = scratch.subspan(0, n_ + m_ + tf_);
    std::span<double> d_ctrl_in = scratch.subspan(n_ + m_ + tf_, n_ + tf_);
    std::span<double> work = scratch.subspan(2 * n_ + m_ + 2 * tf_);

    const std::size_t nc = model_->controller.values.size();
    std::span<double> d_ctrl, d_dyn;
    if (target_ == GradTarget::controller) d_ctrl = d_params;
    else if (target_ == GradTarget::dynamics) d_dyn = d_params;
    else {
      d_ctrl = d_params.subspan(0, nc);
      d_dyn = d_params.subspan(nc);
    }

    mlp_backward(model_->dynamics, da, upstream, d_dyn_in, d_dyn, work);
    mlp_backward(model_->controller, ca, d_dyn_in.subspan(n_, m_), d_ctrl_in, d_ctrl, work);
    for (std::size_t i = 0; i < n_; ++i) d_x[i] = d_dyn_in[i] + d_ctrl_in[i];
  }

 private:
  void forward_controller(std::span<const double> x, double t, std::span<double> acts) const {
    std::copy(x.begin(), x.end(), acts.begin());
    if (tf_) acts[n_] = t;
    mlp_forward_into(model_->controller, acts.subspan(0, n_ + tf_), acts);
  }

  const NocModel* model_;
  GradTarget target_;
  std::size_t n_ = 0, m_ = 0, tf_ = 0, ctrl_acts_ = 0, dyn_acts_ = 0;
};

inline CoupledField coupled_field(const NocModel& model) { return CoupledField(model); }

}  // namespace noc
