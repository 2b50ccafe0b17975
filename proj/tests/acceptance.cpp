// End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//
//   acceptance            all criteria (the training runs take over an hour on one core)
//   acceptance 1 2 3      selected criteria only
//
// Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "noc/noc.hpp"

namespace fs = std::filesystem;
using noc::Mat;
using noc::Vec;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

void report(int id, const char* name, const Verdict& v) {
  std::printf("criterion %d %-26s %s  %s\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
  std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) {
  std::fprintf(stderr, "  %s\n", s.c_str());
  std::fflush(stderr);
}

// --- 1 -------------------------------------------------------------------

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

struct Shape {
  std::size_t n, m;
  std::vector<std::size_t> ctl_hidden, dyn_hidden;
  double horizon, x0_range;
};

Verdict gradient_exactness() {
  const Clock::time_point t0 = Clock::now();
  const Shape shapes[] = {{2, 1, {30}, {30}, 1.0, 2.0}, {4, 1, {64}, {64, 32}, 2.0, 0.05}};
  const std::size_t n_steps = 10;
  const double eps = 1e-3;
  noc::Rng rng(2024);
  double worst = 0.0;
  std::size_t checked = 0;
  const int instances = 20;
  for (int inst = 0; inst < instances; ++inst) {
    const Shape& s = shapes[inst % 2];
    noc::NocModel model = noc::NocModel::create(s.n, s.m, s.ctl_hidden, s.dyn_hidden, true, rng.next(), rng.next());
    for (double& v : model.controller.values) v += rng.uniform(-0.05, 0.05);
    Vec x0(s.n), target(s.n);
    for (std::size_t i = 0; i < s.n; ++i) {
      x0[i] = rng.uniform(-s.x0_range, s.x0_range);
      target[i] = rng.uniform(-1.0, 1.0);
    }
    const noc::LossMode modes[] = {noc::LossMode::end_state, noc::LossMode::integral};

    const noc::CoupledField field(model);
    noc::RolloutRecord rec;
    noc::record_rollout(field, x0, 0.0, s.horizon, n_steps, rec);
    std::vector<Vec> grads;
    for (noc::LossMode mode : modes) {
      Vec cot((n_steps + 1) * s.n), g(field.param_count(), 0.0);
      noc::control_loss_cotangents(rec.trajectory, target, mode, 1.0, cot);
      noc::rollout_vjp(field, rec, cot, g);
      grads.push_back(std::move(g));
    }

    const std::size_t nc = model.controller.values.size();
    auto losses = [&](const noc::NocModel& m) {
      const noc::Trajectory tr = noc::rk4_rollout(noc::CoupledField(m), x0, 0.0, s.horizon, n_steps);
      return std::pair{noc::control_loss(tr, target, modes[0]), noc::control_loss(tr, target, modes[1])};
    };
    // Fourth-order central stencil; the plain two-point one loses ~1e-10 to
    // cancellation, too much against gradients of order 1e-7.
    noc::NocModel probe = model;
    for (std::size_t k = 0; k < field.param_count(); ++k) {
      double& v = k < nc ? probe.controller.values[k] : probe.dynamics.values[k - nc];
      const double orig = v;
      std::pair<double, double> at[4];
      const double offsets[4] = {2 * eps, eps, -eps, -2 * eps};
      for (int j = 0; j < 4; ++j) {
        v = orig + offsets[j];
        at[j] = losses(probe);
      }
      v = orig;
      const double fd_end = (-at[0].first + 8 * at[1].first - 8 * at[2].first + at[3].first) / (12 * eps);
      const double fd_int = (-at[0].second + 8 * at[1].second - 8 * at[2].second + at[3].second) / (12 * eps);
      worst = std::max({worst, relative_error(grads[0][k], fd_end), relative_error(grads[1][k], fd_int)});
      checked += 2;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt("%d instances, %zu gradients, max rel err %.2e (< 1e-4), %.1f s (< 60 s)", instances, checked, worst, secs)};
}

// --- 2 -------------------------------------------------------------------

Verdict solver_order() {
  const Mat A{{0, 1}, {1, 0}};
  const noc::FunctionField field(2, [&A](std::span<const double> x, double, std::span<double> out) {
    out[0] = A(0, 0) * x[0] + A(0, 1) * x[1];
    out[1] = A(1, 0) * x[0] + A(1, 1) * x[1];
  });
  const Vec x0{1.0, -0.5};
  const Vec exact = noc::mat_exp(A, 1.0) * std::span<const double>(x0);
  auto error = [&](std::size_t n) {
    const noc::Trajectory tr = noc::rk4_rollout(field, x0, 0.0, 1.0, n);
    return std::hypot(tr.final_state()[0] - exact[0], tr.final_state()[1] - exact[1]);
  };
  // h = 0.1 / 2^j down to 1.5625e-3, the last halving above 1e-3
  bool ok = true;
  std::string ratios;
  double prev = error(10);
  for (std::size_t n = 20; n <= 640; n *= 2) {
    const double e = error(n);
    const double r = prev / e;
    ok = ok && r >= 12.0 && r <= 20.0;
    ratios += fmt("%s%.2f", ratios.empty() ? "" : " ", r);
    prev = e;
  }
  return {ok, "ratios per halving from h=0.1: " + ratios + " (each in [12, 20])"};
}

// --- 3 -------------------------------------------------------------------

Verdict oracle_steering() {
  const noc::Environment env = noc::Environment::linear();
  const noc::LinearParams p;
  noc::Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x0{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const Vec xs{rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const noc::OptimalControlLaw law = noc::OptimalControlLaw::build(p.A, p.B, 1.0, x0, xs, 256);
    const noc::Trajectory tr =
        noc::rk4_rollout(noc::Environment::ControlledField<noc::OptimalControlLaw>(env, law), x0, 0.0, 1.0, 1000);
    worst = std::max(worst, noc::distance(tr.final_state(), xs));
  }
  return {worst < 1e-3, fmt("10 random pairs, worst endpoint error %.2e (< 1e-3), h = 1e-3, 256 panels", worst)};
}

// --- 4 and 7 ---------------------------------------------------------------

struct LinearRun {
  noc::RunConfig rc;
  noc::TrainResult result;
  noc::EvalMetrics final_eval;
  double seconds = 0.0;
};

LinearRun train_linear(std::size_t steps) {
  LinearRun run{noc::default_run_config(noc::TaskKind::linear), {}, {}, 0.0};
  run.rc.train.dynamics_stages[0].steps = steps;
  run.rc.train.controller_steps = steps;
  noc::Environment env = run.rc.make_environment();
  const Clock::time_point t0 = Clock::now();
  run.result = noc::alternate_train(run.rc.train, env, [&](const noc::NocModel&, const noc::AlternationRecord& r) {
    note(fmt("linear n=%zu alt %zu: endpoint %.4f deviation %.6f (%.0f s)", steps, r.index, r.eval.mean_endpoint_distance,
             r.eval.model_deviation, seconds_since(t0)));
  });
  run.seconds = seconds_since(t0);
  run.final_eval = noc::evaluate_model(run.result.model, env.fresh_copy(), run.result.log.initial_states, run.rc.train);
  return run;
}

std::optional<LinearRun> linear_full;

Verdict linear_reproduction() {
  const LinearRun smoke = train_linear(1500);
  const auto& alts = smoke.result.log.alternations;
  const bool smoke_ok = alts.back().eval.mean_endpoint_distance < alts.front().eval.mean_endpoint_distance &&
                        alts.back().eval.model_deviation < alts.front().eval.model_deviation;
  const std::string smoke_text =
      fmt("smoke: endpoint %.3f -> %.4f, deviation %.4f -> %.2e, %.0f s", alts.front().eval.mean_endpoint_distance,
          alts.back().eval.mean_endpoint_distance, alts.front().eval.model_deviation, alts.back().eval.model_deviation,
          smoke.seconds);

  linear_full = train_linear(10000);
  const noc::EvalMetrics& e = linear_full->final_eval;

  // Learned controller against the analytic law on the same batch, for the record.
  const noc::Environment env = linear_full->rc.make_environment();
  double control_mse = 0.0;
  for (const Vec& x0 : linear_full->result.log.initial_states) {
    const noc::OptimalControlLaw law =
        noc::optimal_control_law(linear_full->rc.linear.A, linear_full->rc.linear.B, 1.0, x0, linear_full->rc.train.target);
    control_mse += noc::compare_controllers(law, linear_full->result.model.policy(), env, 100).control_mse;
  }
  control_mse /= static_cast<double>(linear_full->result.log.initial_states.size());

  const bool ok = smoke_ok && e.mean_endpoint_distance < 0.1 && e.model_deviation < 0.01;
  return {ok, fmt("endpoint %.4f (< 0.1), deviation %.2e (< 0.01), %.0f s; ", e.mean_endpoint_distance,
                  e.model_deviation, linear_full->seconds) +
                  smoke_text + fmt("; control mse vs law %.3g", control_mse)};
}

Verdict local_fit() {
  if (!linear_full) linear_full = train_linear(10000);
  const noc::Environment env = linear_full->rc.make_environment();
  const noc::VectorFieldGrid grid = noc::vector_field_grid(linear_full->result.model, env, noc::GridBounds{}, 101, 101,
                                                           0.0, linear_full->final_eval.true_rollouts);
  const noc::LocalFitSummary s = noc::local_fit_summary(grid, 0.1, 1.0);
  const bool ok = s.near_count > 0 && s.far_count > 0 && s.gap() >= 0.05;
  return {ok, fmt("near mean %.4f (%zu cells), far mean %.4f (%zu cells), gap %.4f (>= 0.05)", s.near_mean, s.near_count,
                  s.far_mean, s.far_count, s.gap())};
}

// --- 5 and 6 ---------------------------------------------------------------

struct CartPoleRun {
  noc::RunConfig rc;
  noc::TrainResult result;
  noc::EvalMetrics final_eval;
  std::uint64_t counter = 0;
  double seconds = 0.0;
};

std::optional<CartPoleRun> cartpole_full;

void ensure_cartpole() {
  if (cartpole_full) return;
  CartPoleRun run{noc::default_run_config(noc::TaskKind::cartpole), {}, {}, 0, 0.0};
  noc::Environment env = run.rc.make_environment();
  const Clock::time_point t0 = Clock::now();
  run.result = noc::alternate_train(run.rc.train, env, [&](const noc::NocModel&, const noc::AlternationRecord& r) {
    note(fmt("cartpole alt %zu: true control loss %.4g, max|x| %.3f, max|theta| %.3f, env rollouts %llu (%.0f s)",
             r.index, r.eval.true_control_loss, r.eval.max_abs_state[0], r.eval.max_abs_state[2],
             static_cast<unsigned long long>(r.env_rollouts), seconds_since(t0)));
  });
  run.seconds = seconds_since(t0);
  run.counter = env.rollouts_served();
  run.final_eval = noc::evaluate_model(run.result.model, env.fresh_copy(), run.result.log.initial_states, run.rc.train);
  cartpole_full = std::move(run);
}

Verdict data_efficiency() {
  ensure_cartpole();
  const auto& alts = cartpole_full->result.log.alternations;
  bool frozen = true;
  for (const auto& a : alts) frozen = frozen && a.env_rollouts_before_controller == a.env_rollouts_after_controller;
  const std::uint64_t expected = cartpole_full->rc.train.alternations * cartpole_full->rc.train.batch_size;
  const bool ok = frozen && cartpole_full->counter == expected && cartpole_full->result.log.env_rollouts() == expected;
  return {ok, fmt("env rollouts %llu (expected %llu), counter unchanged in all %zu controller phases: %s",
                  static_cast<unsigned long long>(cartpole_full->counter), static_cast<unsigned long long>(expected),
                  alts.size(), frozen ? "yes" : "no")};
}

Verdict cartpole_stabilization() {
  ensure_cartpole();
  const noc::EvalMetrics& e = cartpole_full->final_eval;
  const double max_x = e.max_abs_state[0], max_theta = e.max_abs_state[2];
  const double loss0 = cartpole_full->result.log.initial_eval.true_control_loss;
  const double lossK = e.true_control_loss;
  const std::string text = fmt("max|theta| %.3f (< 0.2), max|x| %.3f (< 1.0) over 5 states; true control loss %.4g -> %.4g "
                               "(ratio %.2f); %.0f s",
                               max_theta, max_x, loss0, lossK, loss0 / lossK, cartpole_full->seconds);
  if (max_theta < 0.2 && max_x < 1.0) return {true, text};
  if (loss0 >= 10.0 * lossK) return {true, "fallback (control loss down >= 10x); " + text};
  return {false, "neither bounds nor >= 10x control-loss decrease; " + text};
}

// --- 8 -------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

noc::RunConfig reduced(noc::TaskKind task) {
  noc::RunConfig rc = noc::default_run_config(task);
  rc.train.alternations = 2;
  rc.train.seed = 11;
  for (auto& s : rc.train.dynamics_stages) s.steps = task == noc::TaskKind::linear ? 150 : 20;
  rc.train.controller_steps = task == noc::TaskKind::linear ? 150 : 40;
  if (task == noc::TaskKind::cartpole) rc.train.solver_steps = 50;
  return rc;
}

Verdict reproducibility() {
  const fs::path root = fs::temp_directory_path() / "noc_acceptance_repro";
  fs::remove_all(root);
  std::size_t files = 0;
  std::vector<std::string> mismatched;
  for (noc::TaskKind task : {noc::TaskKind::linear, noc::TaskKind::cartpole}) {
    const noc::RunConfig rc = reduced(task);
    const fs::path a = root / (std::string(noc::to_string(task)) + "_a");
    const fs::path b = root / (std::string(noc::to_string(task)) + "_b");
    noc::run_training(rc, a);
    noc::run_training(rc, b);
    std::vector<fs::path> rel{"summary.json"};
    for (const auto& entry : fs::directory_iterator(a / "checkpoints")) rel.push_back(fs::relative(entry.path(), a));
    for (const fs::path& r : rel) {
      ++files;
      if (!fs::exists(b / r) || slurp(a / r) != slurp(b / r)) mismatched.push_back(r.string());
    }
  }
  fs::remove_all(root);
  std::string detail = fmt("%zu files compared over linear and cartpole reduced runs", files);
  if (!mismatched.empty()) detail += ", mismatched: " + mismatched.front();
  return {mismatched.empty() && files > 2, detail};
}

// --- 9 -------------------------------------------------------------------

Verdict phase_isolation() {
  bool ok = true;
  std::string detail;
  for (noc::TaskKind task : {noc::TaskKind::linear, noc::TaskKind::cartpole}) {
    noc::RunConfig rc = reduced(task);
    rc.train.alternations = 3;
    noc::Environment env = rc.make_environment();
    const noc::TrainResult r = noc::alternate_train(rc.train, env);
    bool flags = true;
    for (const auto& a : r.log.alternations)
      flags = flags && a.controller_untouched_by_dynamics_phase && a.dynamics_untouched_by_controller_phase &&
              a.env_rollouts_before_controller == a.env_rollouts_after_controller;
    const std::uint64_t expected = rc.train.alternations * rc.train.batch_size;

    // Direct phase calls on the trained model.
    const noc::NocModel before = r.model;
    const std::uint64_t served = env.rollouts_served();
    const noc::PhaseResult dyn = noc::train_dynamics_phase(r.model, r.log.alternations.back().real_trajectories, rc.train);
    const noc::PhaseResult ctl = noc::train_controller_phase(r.model, r.log.initial_states, rc.train);
    const bool direct = noc::bit_identical(before.controller, r.model.controller) &&
                        noc::bit_identical(before.dynamics, r.model.dynamics) && env.rollouts_served() == served &&
                        dyn.params.values.size() == before.dynamics.values.size() &&
                        ctl.params.values.size() == before.controller.values.size();

    const bool task_ok = flags && direct && env.rollouts_served() == expected && r.log.env_rollouts() == expected;
    ok = ok && task_ok;
    detail += fmt("%s%s: rollouts %llu/%llu, flags %s, direct %s", detail.empty() ? "" : "; ", noc::to_string(task),
                  static_cast<unsigned long long>(env.rollouts_served()), static_cast<unsigned long long>(expected),
                  flags ? "ok" : "broken", direct ? "ok" : "broken");
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  struct Entry {
    int id;
    const char* name;
    Verdict (*run)();
  };
  const Entry entries[] = {
      {1, "gradient-exactness", gradient_exactness}, {2, "solver-order", solver_order},
      {3, "oracle-steering", oracle_steering},       {4, "linear-reproduction", linear_reproduction},
      {5, "data-efficiency", data_efficiency},       {6, "cartpole-stabilization", cartpole_stabilization},
      {7, "local-fit", local_fit},                   {8, "reproducibility", reproducibility},
      {9, "phase-isolation", phase_isolation},
  };

  int failures = 0;
  for (const Entry& e : entries) {
    if (!wanted.count(e.id)) continue;
    Verdict v;
    try {
      v = e.run();
    } catch (const std::exception& ex) {
      v = {false, std::string("error: ") + ex.what()};
    }
    report(e.id, e.name, v);
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
