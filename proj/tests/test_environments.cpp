#include <cmath>

#include <gtest/gtest.h>

#include "noc/environments.hpp"
#include "noc/rng.hpp"

using noc::Vec;

namespace {

struct ZeroPolicy {
  std::size_t dim = 1;
  std::size_t control_dim() const { return dim; }
  void operator()(std::span<const double>, double, std::span<double> u) const {
    for (double& v : u) v = 0.0;
  }
};

}  // namespace

TEST(LinearEnv, Derivative) {
  const noc::LinearParams p;
  EXPECT_EQ(noc::linear_derivative(p, Vec{1, 0}, Vec{0}), (Vec{0, 1}));
  EXPECT_EQ(noc::linear_derivative(p, Vec{1, 0}, Vec{1}), (Vec{1, 1}));
  EXPECT_EQ(noc::linear_derivative(p, Vec{0, 0}, Vec{0}), (Vec{0, 0}));
  EXPECT_THROW(noc::linear_derivative(p, Vec{1, 0, 0}, Vec{0}), noc::DimensionError);
}

TEST(CartPole, UprightEquilibrium) {
  const Vec d = noc::cartpole_derivative({}, Vec{0, 0, 0, 0}, 0.0);
  for (double v : d) EXPECT_EQ(v, 0.0);
}

// Reference values from an independent evaluation of the same equations.
TEST(CartPole, PushFromRest) {
  const Vec d = noc::cartpole_derivative({}, Vec{0, 0, 0, 0}, 1.1);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_NEAR(d[1], 1.0731707317073171, 1e-14);
  EXPECT_EQ(d[2], 0.0);
  EXPECT_NEAR(d[3], -1.6097560975609757, 1e-14);
}

TEST(CartPole, TiltedPoleFalls) {
  const Vec d = noc::cartpole_derivative({}, Vec{0, 0, 0.1, 0}, 0.0);
  EXPECT_NEAR(d[3], 1.5737853048016259, 1e-12);
  EXPECT_NEAR(d[1], -0.071178315160498426, 1e-12);
}

TEST(CartPole, GeneralState) {
  const Vec d = noc::cartpole_derivative({}, Vec{0.3, -0.2, 0.4, 1.5}, -2.0);
  EXPECT_DOUBLE_EQ(d[0], -0.2);
  EXPECT_NEAR(d[1], -2.1419100385372825, 1e-12);
  EXPECT_DOUBLE_EQ(d[2], 1.5);
  EXPECT_NEAR(d[3], 8.683694315677025, 1e-12);
}

TEST(CartPole, MirrorSymmetry) {
  // Reflecting the state and the force reflects the accelerations.
  noc::Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const Vec s{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-2, 2)};
    const double f = rng.uniform(-5, 5);
    const Vec a = noc::cartpole_derivative({}, s, f);
    const Vec b = noc::cartpole_derivative({}, Vec{-s[0], -s[1], -s[2], -s[3]}, -f);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a[k], -b[k], 1e-13);
  }
}

TEST(CartPole, EnergyConservedWithoutForce) {
  const noc::CartPoleParams p;
  const noc::FunctionField free(4, [&](std::span<const double> x, double, std::span<double> out) {
    noc::cartpole_derivative_into(p, x, 0.0, out);
  });
  const Vec s0{0.0, 0.3, 0.5, -0.4};
  const double e0 = noc::cartpole_energy(p, s0);
  auto drift = [&](std::size_t n) {
    const noc::Trajectory tr = noc::rk4_rollout(free, s0, 0.0, 2.0, n);
    double worst = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k) worst = std::max(worst, std::abs(noc::cartpole_energy(p, tr.state(k)) - e0));
    return worst;
  };
  const double fine = drift(4000), coarse = drift(400);
  EXPECT_LT(fine, 1e-9);
  // Drift is integration error, shrinking like h^4.
  EXPECT_GT(coarse / fine, 1000.0);
}

TEST(CartPole, RejectsBadParams) {
  noc::CartPoleParams p;
  p.pole_mass = 0.0;
  EXPECT_THROW(noc::Environment::cartpole(p), noc::ArgumentError);
  EXPECT_THROW(noc::cartpole_derivative({}, Vec{0, 0, 0}, 0.0), noc::DimensionError);
}

TEST(Environment, ZeroControllerFollowsFreeEvolution) {
  noc::Environment env = noc::Environment::linear();
  const noc::MlpParams zero = noc::MlpParams::zeros(noc::MlpSpec{{3, 30, 1}});
  const noc::Trajectory tr = env.real_rollout(zero, true, Vec{1.0, 0.0}, 0.0, 1.0, 100);
  EXPECT_NEAR(tr.final_state()[0], 1.543080634815244, 1e-6);
  EXPECT_NEAR(tr.final_state()[1], 1.1752011936438016, 1e-6);
  EXPECT_EQ(env.rollouts_served(), 1u);
}

TEST(Environment, CountsEveryRealRollout) {
  noc::Environment env = noc::Environment::cartpole();
  const ZeroPolicy zero;
  for (int i = 0; i < 7; ++i) (void)env.real_rollout(zero, Vec{0, 0, 0.01, 0}, 0.0, 0.5, 10);
  EXPECT_EQ(env.rollouts_served(), 7u);
  // Uncounted access to the same dynamics.
  (void)noc::rk4_rollout(noc::Environment::ControlledField<ZeroPolicy>(env, zero), Vec{0, 0, 0.01, 0}, 0.0, 0.5, 10);
  EXPECT_EQ(env.rollouts_served(), 7u);
  EXPECT_EQ(env.fresh_copy().rollouts_served(), 0u);
}

TEST(Environment, RejectsMismatchedController) {
  noc::Environment env = noc::Environment::linear();
  const noc::MlpParams wrong = noc::MlpParams::zeros(noc::MlpSpec{{5, 4, 1}});
  EXPECT_THROW(env.real_rollout(wrong, true, Vec{1.0, 0.0}, 0.0, 1.0, 10), noc::DimensionError);
  const noc::MlpParams two_out = noc::MlpParams::zeros(noc::MlpSpec{{3, 4, 2}});
  EXPECT_THROW(env.real_rollout(two_out, true, Vec{1.0, 0.0}, 0.0, 1.0, 10), noc::DimensionError);
  EXPECT_THROW(env.real_rollout(ZeroPolicy{}, Vec{1.0}, 0.0, 1.0, 10), noc::DimensionError);
  EXPECT_EQ(env.rollouts_served(), 0u);
}

TEST(TaskKind, Parsing) {
  EXPECT_EQ(noc::task_from_string("linear"), noc::TaskKind::linear);
  EXPECT_EQ(noc::task_from_string("cartpole"), noc::TaskKind::cartpole);
  EXPECT_THROW(noc::task_from_string("acrobot"), noc::UnsupportedTaskError);
}
