#pragma once

// Grid comparison of the true closed-loop field f(x, h(x, t)) against the
// learned one g(x, h(x, t), t) over a rectangle of 2-D states.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "noc/environments.hpp"
#include "noc/errors.hpp"
#include "noc/model.hpp"
#include "noc/odeint.hpp"

namespace noc {

struct GridBounds {
  double x1_min = -2.5, x1_max = 2.5;
  double x2_min = -2.5, x2_max = 2.5;
};

struct VectorFieldCell {
  double x1 = 0.0, x2 = 0.0;
  Vec true_field;
  Vec learned_field;
  Vec control;
  double similarity = 0.0;
  double distance = 0.0;  // to the nearest reference state; +inf without references
};

struct VectorFieldGrid {
  GridBounds bounds;
  std::size_t resolution1 = 0, resolution2 = 0;
  double time = 0.0;
  std::vector<VectorFieldCell> cells;  // x1 varies fastest
};

// 1 when both vectors vanish, 0 when exactly one does.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 && bb == 0.0) return 1.0;
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

inline double distance_to_states(std::span<const double> x, const std::vector<Trajectory>& refs) {
  double best = std::numeric_limits<double>::infinity();
  for (const Trajectory& tr : refs) {
    if (tr.state_dim != x.size()) throw DimensionError("distance_to_states: reference trajectory has wrong dimension");
    for (std::size_t k = 0; k < tr.size(); ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = tr.state(k)[i] - x[i];
        s += d * d;
      }
      best = std::min(best, s);
    }
  }
  return std::sqrt(best);
}

inline VectorFieldGrid vector_field_grid(const NocModel& model, const Environment& env, const GridBounds& bounds,
                                         std::size_t resolution1, std::size_t resolution2, double t_fixed,
                                         const std::vector<Trajectory>& references) {
  if (env.state_dim() != 2 || model.state_dim() != 2)
    throw UnsupportedTaskError("vector field grids need a 2-D state; task '" + std::string(to_string(env.kind())) +
                               "' has " + std::to_string(env.state_dim()));
  if (model.control_dim() != env.control_dim()) throw DimensionError("vector_field_grid: control dimension mismatch");
  if (resolution1 < 2 || resolution2 < 2) throw ArgumentError("vector_field_grid: resolution must be at least 2 per axis");
  if (!(bounds.x1_max > bounds.x1_min) || !(bounds.x2_max > bounds.x2_min))
    throw ArgumentError("vector_field_grid: empty bounds");

  VectorFieldGrid grid{bounds, resolution1, resolution2, t_fixed, {}};
  grid.cells.reserve(resolution1 * resolution2);
  const CoupledField learned(model);
  const ControllerPolicy policy = model.policy();
  for (std::size_t j = 0; j < resolution2; ++j) {
    for (std::size_t i = 0; i < resolution1; ++i) {
      VectorFieldCell c;
      c.x1 = bounds.x1_min + (bounds.x1_max - bounds.x1_min) * static_cast<double>(i) / static_cast<double>(resolution1 - 1);
      c.x2 = bounds.x2_min + (bounds.x2_max - bounds.x2_min) * static_cast<double>(j) / static_cast<double>(resolution2 - 1);
      const Vec x{c.x1, c.x2};
      c.true_field.resize(2);
      c.learned_field.resize(2);
      c.control.resize(model.control_dim());
      policy(x, t_fixed, c.control);
      env.derivative(x, c.control, c.true_field);
      learned.evaluate(x, t_fixed, c.learned_field);
      c.similarity = cosine_similarity(c.true_field, c.learned_field);
      c.distance = distance_to_states(x, references);
      grid.cells.push_back(std::move(c));
    }
  }
  return grid;
}

struct LocalFitSummary {
  double near_mean = 0.0, far_mean = 0.0;
  std::size_t near_count = 0, far_count = 0;
  double gap() const { return near_mean - far_mean; }
};

inline LocalFitSummary local_fit_summary(const VectorFieldGrid& grid, double near = 0.1, double far = 1.0) {
  LocalFitSummary s;
  for (const VectorFieldCell& c : grid.cells) {
    if (c.distance < near) {
      s.near_mean += c.similarity;
      ++s.near_count;
    } else if (c.distance > far) {
      s.far_mean += c.similarity;
      ++s.far_count;
    }
  }
  if (s.near_count) s.near_mean /= static_cast<double>(s.near_count);
  if (s.far_count) s.far_mean /= static_cast<double>(s.far_count);
  return s;
}

// Columns: x1,x2,f1,f2,g1,g2,u1..um,similarity,distance
inline void write_vector_field_csv(std::ostream& os, const VectorFieldGrid& grid) {
  const std::size_t m = grid.cells.empty() ? 0 : grid.cells.front().control.size();
  os << "x1,x2,f1,f2,g1,g2";
  for (std::size_t j = 0; j < m; ++j) os << ",u" << j + 1;
  os << ",similarity,distance\n";
  for (const VectorFieldCell& c : grid.cells) {
    os << format_double(c.x1) << ',' << format_double(c.x2) << ',' << format_double(c.true_field[0]) << ','
       << format_double(c.true_field[1]) << ',' << format_double(c.learned_field[0]) << ','
       << format_double(c.learned_field[1]);
    for (double u : c.control) os << ',' << format_double(u);
    os << ',' << format_double(c.similarity) << ',' << format_double(c.distance) << '\n';
  }
}

}  // namespace noc
