#pragma once

// Small dense linear algebra: row-major matrices, matrix exponential,
// composite Simpson quadrature and a pivoted linear solver. Sizes here are
// tiny (2x2 .. 4x4), so everything is straightforward loops.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "noc/errors.hpp"

namespace noc {

using Vec = std::vector<double>;

class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("Mat: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat diagonal(std::span<const double> d) {
    Mat m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  Mat transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Mat& operator+=(const Mat& o) {
    require_same_shape(o, "Mat::operator+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    require_same_shape(o, "Mat::operator-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Mat& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(Mat a, double s) { return a *= s; }
  friend Mat operator*(double s, Mat a) { return a *= s; }

  friend Mat operator*(const Mat& a, const Mat& b) {
    if (a.cols_ != b.rows_) throw DimensionError("Mat product: inner dimensions differ");
    Mat c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double aik = a(i, k);
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  friend Vec operator*(const Mat& a, std::span<const double> x) {
    if (a.cols_ != x.size()) throw DimensionError("Mat-vector product: dimension mismatch");
    Vec y(a.rows_, 0.0);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols_; ++j) s += a(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  void require_same_shape(const Mat& o, const char* where) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw DimensionError(std::string(where) + ": shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double norm_inf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Induced 1-norm (max column sum).
inline double norm1(const Mat& m) {
  double best = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) s += std::abs(m(i, j));
    best = std::max(best, s);
  }
  return best;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) m = std::max(m, std::abs(a.data()[k] - b.data()[k]));
  return m;
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// e^{M t} by scaling and squaring with a truncated Taylor series. The scaled
// argument has 1-norm <= 1/2, where 20 terms leave a remainder below 1e-25.
inline Mat mat_exp(const Mat& m, double t) {
  if (!m.square()) throw DimensionError("mat_exp: matrix must be square");
  if (!std::isfinite(t)) throw ArgumentError("mat_exp: t must be finite");
  const std::size_t n = m.rows();
  Mat a = m * t;
  const double nrm = norm1(a);
  int squarings = 0;
  if (nrm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(nrm / 0.5)));
  a *= std::ldexp(1.0, -squarings);

  Mat result = Mat::identity(n);
  Mat term = Mat::identity(n);
  for (int k = 1; k <= 20; ++k) {
    term = term * a;
    term *= 1.0 / k;
    result += term;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  if (!all_finite(result.data())) throw ArgumentError("mat_exp: result overflowed");
  return result;
}

// Composite Simpson rule applied entrywise to a matrix-valued integrand.
inline Mat simpson_integrate_matrix(const std::function<Mat(double)>& f, double a, double b, std::size_t n_panels) {
  if (n_panels == 0 || n_panels % 2 != 0) throw ArgumentError("simpson_integrate_matrix: panel count must be even and positive");
  if (!(a < b)) throw ArgumentError("simpson_integrate_matrix: require a < b");
  const double h = (b - a) / static_cast<double>(n_panels);
  Mat acc = f(a);
  acc += f(b);
  for (std::size_t i = 1; i < n_panels; ++i) {
    const double w = (i % 2 == 1) ? 4.0 : 2.0;
    acc += f(a + h * static_cast<double>(i)) * w;
  }
  acc *= h / 3.0;
  return acc;
}

struct SimpsonResult {
  Mat value;          // result at 2*n panels
  double change = 0;  // max entrywise change between n and 2n panels
};

// Integrates at n and 2n panels and throws QuadratureError if the two
// disagree by tolerance or more.
inline SimpsonResult simpson_with_doubling(const std::function<Mat(double)>& f, double a, double b,
                                           std::size_t n_panels, double tolerance = 1e-8) {
  const Mat coarse = simpson_integrate_matrix(f, a, b, n_panels);
  Mat fine = simpson_integrate_matrix(f, a, b, 2 * n_panels);
  const double change = max_abs_diff(coarse, fine);
  if (!(change < tolerance))
    throw QuadratureError("Simpson quadrature did not converge: change " + std::to_string(change) +
                          " at " + std::to_string(n_panels) + " panels");
  return {std::move(fine), change};
}

// Gaussian elimination with partial pivoting.
inline Vec solve_linear(const Mat& m, std::span<const double> b) {
  if (!m.square()) throw DimensionError("solve_linear: matrix must be square");
  const std::size_t n = m.rows();
  if (b.size() != n) throw DimensionError("solve_linear: right-hand side has wrong length");
  Mat a = m;
  Vec x(b.begin(), b.end());
  const double scale = std::max(norm_inf(m.data()), 1e-300);

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (std::abs(a(piv, col)) < 1e-14 * scale) throw SingularMatrixError("solve_linear: matrix is numerically singular");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
      std::swap(x[col], x[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = a(r, col) / a(col, col);
      if (factor == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) a(r, j) -= factor * a(col, j);
      x[r] -= factor * x[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

// Lower-triangular Cholesky factor; throws SingularMatrixError when the
// matrix is not (numerically) positive definite.
inline Mat cholesky(const Mat& m) {
  if (!m.square()) throw DimensionError("cholesky: matrix must be square");
  const std::size_t n = m.rows();
  Mat l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) throw SingularMatrixError("cholesky: matrix is not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

}  // namespace noc
