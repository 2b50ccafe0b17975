#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "noc/errors.hpp"
#include "noc/mlp.hpp"

namespace noc {

enum class OptimizerKind { adam, sgd };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

struct OptimizerState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const MlpParams& p) {
    return {std::vector<double>(p.values.size(), 0.0), std::vector<double>(p.values.size(), 0.0), 0};
  }
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline std::pair<MlpParams, OptimizerState> adam_step(MlpParams params, std::span<const double> grads,
                                                      OptimizerState state, double lr, AdamHyper hp = {}) {
  const std::size_t n = params.values.size();
  if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n)
    throw DimensionError("adam_step: gradient or state shape does not match parameters");
  state.step += 1;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < n; ++k) {
    const double g = grads[k];
    double& m = state.first_moment[k];
    double& v = state.second_moment[k];
    m = hp.beta1 * m + (1.0 - hp.beta1) * g;
    v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
    params.values[k] -= lr * (m / c1) / (std::sqrt(v / c2) + hp.eps);
  }
  params.updates += 1;
  return {std::move(params), std::move(state)};
}

inline std::pair<MlpParams, OptimizerState> sgd_step(MlpParams params, std::span<const double> grads,
                                                     OptimizerState state, double lr) {
  if (grads.size() != params.values.size()) throw DimensionError("sgd_step: gradient shape does not match parameters");
  for (std::size_t k = 0; k < grads.size(); ++k) params.values[k] -= lr * grads[k];
  state.step += 1;
  params.updates += 1;
  return {std::move(params), std::move(state)};
}

inline std::pair<MlpParams, OptimizerState> optimizer_step(OptimizerKind kind, MlpParams params,
                                                           std::span<const double> grads, OptimizerState state,
                                                           double lr) {
  if (kind == OptimizerKind::adam) return adam_step(std::move(params), grads, std::move(state), lr);
  return sgd_step(std::move(params), grads, std::move(state), lr);
}

}  // namespace noc
