#pragma once

// Dense feedforward networks: tanh hidden layers, identity output layer.
//
// Parameters live in one flat vector. Layer l contributes its weight matrix
// (out x in, row-major) followed by its bias vector, so optimizers and
// checkpoints treat a network as a single array of doubles.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "noc/core_math.hpp"
#include "noc/errors.hpp"
#include "noc/rng.hpp"

namespace noc {

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;

  void validate() const {
    if (layer_sizes.size() < 2) throw ArgumentError("MlpSpec: need at least input and output sizes");
    for (std::size_t s : layer_sizes)
      if (s == 0) throw ArgumentError("MlpSpec: layer sizes must be positive");
  }

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
  }

  // Doubles needed to hold the input and every layer's output.
  std::size_t activation_count() const {
    std::size_t n = 0;
    for (std::size_t s : layer_sizes) n += s;
    return n;
  }

  std::size_t max_width() const {
    std::size_t m = 0;
    for (std::size_t s : layer_sizes) m = std::max(m, s);
    return m;
  }

  // Scratch doubles required by mlp_backward.
  std::size_t scratch_size() const { return 2 * max_width(); }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct MlpParams {
  MlpSpec spec;
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::uint64_t updates = 0;  // optimizer steps applied over the lifetime

  static MlpParams zeros(MlpSpec spec) {
    spec.validate();
    MlpParams p;
    p.values.assign(spec.param_count(), 0.0);
    p.spec = std::move(spec);
    return p;
  }

  std::size_t weight_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += spec.layer_sizes[l] * spec.layer_sizes[l + 1] + spec.layer_sizes[l + 1];
    return off;
  }
  std::size_t bias_offset(std::size_t layer) const {
    return weight_offset(layer) + spec.layer_sizes[layer] * spec.layer_sizes[layer + 1];
  }

  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    return values[weight_offset(layer) + row * spec.layer_sizes[layer] + col];
  }
  double& bias(std::size_t layer, std::size_t row) { return values[bias_offset(layer) + row]; }
};

// Same spec and the same bytes in every parameter.
inline bool bit_identical(const MlpParams& a, const MlpParams& b) {
  return a.spec == b.spec && a.values.size() == b.values.size() &&
         std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0;
}

struct GradientBundle {
  Vec d_params;
  Vec d_input;
};

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
inline MlpParams mlp_init(const MlpSpec& spec, std::uint64_t seed) {
  MlpParams p = MlpParams::zeros(spec);
  p.seed = seed;
  Rng rng(seed);
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t nin = spec.layer_sizes[l];
    const std::size_t nout = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(nin));
    for (std::size_t k = 0; k < nin * nout; ++k) p.values[off + k] = rng.uniform(-bound, bound);
    off += nin * nout + nout;
  }
  return p;
}

namespace detail {

// Four independent partial sums; fixed order, so results are reproducible.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

// Forward pass writing the input and each layer output into `acts`
// (size spec.activation_count()). The network output is the trailing
// output_dim() entries. `x` may already live at the head of `acts`.
inline void mlp_forward_into(const MlpParams& p, std::span<const double> x, std::span<double> acts) {
  const auto& sizes = p.spec.layer_sizes;
  const std::size_t layers = sizes.size() - 1;
  if (x.data() != acts.data()) std::copy(x.begin(), x.end(), acts.begin());
  const double* w = p.values.data();
  double* in = acts.data();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t nin = sizes[l];
    const std::size_t nout = sizes[l + 1];
    const double* b = w + nin * nout;
    double* out = in + nin;
    const bool hidden = l + 1 < layers;
    for (std::size_t i = 0; i < nout; ++i) {
      const double s = b[i] + detail::dot(w + i * nin, in, nin);
      out[i] = hidden ? std::tanh(s) : s;
    }
    w = b + nout;
    in = out;
  }
}

// Reverse pass from activations recorded by mlp_forward_into.
// d_input (if non-empty) is overwritten with (dy/dx)^T upstream.
// d_params (if non-empty) is accumulated with (dy/dparams)^T upstream.
inline void mlp_backward(const MlpParams& p, std::span<const double> acts, std::span<const double> upstream,
                         std::span<double> d_input, std::span<double> d_params, std::span<double> scratch) {
  const auto& sizes = p.spec.layer_sizes;
  const std::size_t layers = sizes.size() - 1;
  const std::size_t width = p.spec.max_width();
  double* delta = scratch.data();
  double* next = scratch.data() + width;
  std::copy(upstream.begin(), upstream.end(), delta);

  std::size_t poff = p.values.size();
  std::size_t aoff = acts.size() - sizes[layers];
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t nin = sizes[l];
    const std::size_t nout = sizes[l + 1];
    poff -= nin * nout + nout;
    aoff -= nin;
    const double* w = p.values.data() + poff;
    const double* in = acts.data() + aoff;

    if (!d_params.empty()) {
      double* dw = d_params.data() + poff;
      double* db = dw + nin * nout;
      for (std::size_t i = 0; i < nout; ++i) {
        const double di = delta[i];
        db[i] += di;
        double* drow = dw + i * nin;
        for (std::size_t j = 0; j < nin; ++j) drow[j] += di * in[j];
      }
    }
    if (l == 0 && d_input.empty()) break;

    std::fill(next, next + nin, 0.0);
    for (std::size_t i = 0; i < nout; ++i) {
      const double di = delta[i];
      const double* row = w + i * nin;
      for (std::size_t j = 0; j < nin; ++j) next[j] += row[j] * di;
    }
    if (l > 0) {
      for (std::size_t j = 0; j < nin; ++j) next[j] *= 1.0 - in[j] * in[j];
      std::swap(delta, next);
    } else {
      std::copy(next, next + nin, d_input.begin());
    }
  }
}

inline Vec mlp_forward(const MlpParams& p, std::span<const double> x) {
  if (x.size() != p.spec.input_dim())
    throw ArgumentError("mlp_forward: input has " + std::to_string(x.size()) + " entries, network expects " +
                        std::to_string(p.spec.input_dim()));
  Vec acts(p.spec.activation_count());
  mlp_forward_into(p, x, acts);
  return Vec(acts.end() - static_cast<std::ptrdiff_t>(p.spec.output_dim()), acts.end());
}

inline GradientBundle mlp_vjp(const MlpParams& p, std::span<const double> x, std::span<const double> upstream) {
  if (x.size() != p.spec.input_dim()) throw DimensionError("mlp_vjp: input dimension mismatch");
  if (upstream.size() != p.spec.output_dim()) throw DimensionError("mlp_vjp: upstream dimension mismatch");
  Vec acts(p.spec.activation_count());
  mlp_forward_into(p, x, acts);
  GradientBundle g{Vec(p.values.size(), 0.0), Vec(x.size(), 0.0)};
  Vec scratch(p.spec.scratch_size());
  mlp_backward(p, acts, upstream, g.d_input, g.d_params, scratch);
  return g;
}

}  // namespace noc
