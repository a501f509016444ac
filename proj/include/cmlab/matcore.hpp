#pragma once

// Dense real symmetric matrix core: Givens conjugation, cyclic Jacobi
// eigenvalues, empirical spectral distributions and Haar sampling on SO(n).
//
// Indices are zero-based throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmlab/errors.hpp"
#include "cmlab/random.hpp"

namespace cmlab {

// General dense row-major matrix. Used for Gaussian chain states and
// orthogonal group elements.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<double> data() noexcept { return data_; }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Real symmetric matrix. Writes go through set(), which mirrors, so
// entry(i,j) and entry(j,i) are always bitwise equal.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {
    if (n == 0) throw InvalidInput("SymMatrix: order must be positive");
  }

  SymMatrix(std::initializer_list<std::initializer_list<double>> rows) : SymMatrix(rows.size()) {
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != n_) throw InvalidInput("SymMatrix: ragged initializer");
      std::size_t j = 0;
      for (double v : row) data_[i * n_ + j++] = v;
      ++i;
    }
    for (i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j)
        if (data_[i * n_ + j] != data_[j * n_ + i])
          throw InvalidInput("SymMatrix: initializer is not symmetric");
  }

  static SymMatrix identity(std::size_t n) {
    SymMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m.set(i, i, 1.0);
    return m;
  }

  static SymMatrix diagonal(std::span<const double> d) {
    SymMatrix m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m.set(i, i, d[i]);
    return m;
  }

  // Symmetric part (M + M^T)/2 of a square dense matrix.
  static SymMatrix symmetrized(const DenseMatrix& m) {
    if (m.rows() != m.cols()) throw InvalidInput("SymMatrix::symmetrized: matrix not square");
    SymMatrix s(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = i; j < m.rows(); ++j) s.set(i, j, 0.5 * (m(i, j) + m(j, i)));
    return s;
  }

  [[nodiscard]] std::size_t order() const noexcept { return n_; }

  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }

  void set(std::size_t i, std::size_t j, double v) noexcept {
    data_[i * n_ + j] = v;
    data_[j * n_ + i] = v;
  }

  [[nodiscard]] double trace() const noexcept {
    double t = 0.0;
    for (std::size_t i = 0; i < n_; ++i) t += data_[i * n_ + i];
    return t;
  }

  [[nodiscard]] double max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  [[nodiscard]] double frobenius() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// Eigenvalues in ascending order.
struct Spectrum {
  std::vector<double> values;

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] double sum() const noexcept {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

// Right-continuous empirical CDF: value(x) = #{jumps <= x} / size.
class EsdStepFunction {
 public:
  EsdStepFunction() = default;
  explicit EsdStepFunction(std::vector<double> jumps) : jumps_(std::move(jumps)) {
    if (jumps_.empty()) throw InvalidInput("EsdStepFunction: empty jump set");
    std::sort(jumps_.begin(), jumps_.end());
  }

  [[nodiscard]] double operator()(double x) const noexcept {
    auto it = std::upper_bound(jumps_.begin(), jumps_.end(), x);
    return static_cast<double>(it - jumps_.begin()) / static_cast<double>(jumps_.size());
  }

  // Left limit F(x-).
  [[nodiscard]] double left_limit(double x) const noexcept {
    auto it = std::lower_bound(jumps_.begin(), jumps_.end(), x);
    return static_cast<double>(it - jumps_.begin()) / static_cast<double>(jumps_.size());
  }

  [[nodiscard]] const std::vector<double>& jumps() const noexcept { return jumps_; }
  [[nodiscard]] std::size_t size() const noexcept { return jumps_.size(); }

 private:
  std::vector<double> jumps_;
};

// Givens rotation R_ij(theta) in the (i, j) plane, i < j. R has cos on the
// (i,i), (j,j) diagonal, +sin at (i,j) and -sin at (j,i).
struct RotationEvent {
  std::size_t i = 0;
  std::size_t j = 1;
  double theta = 0.0;
};

class OrthogonalMatrix {
 public:
  OrthogonalMatrix() = default;
  explicit OrthogonalMatrix(DenseMatrix m) : m_(std::move(m)) {}

  [[nodiscard]] std::size_t order() const noexcept { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }
  [[nodiscard]] const DenseMatrix& matrix() const noexcept { return m_; }

 private:
  DenseMatrix m_;
};

inline constexpr double kJacobiTolerance = 1e-12;
inline constexpr int kJacobiSweepCap = 100;

// Cyclic Jacobi. Converged when the off-diagonal Frobenius norm is at most
// tol * max(1, ||M||_F).
inline Spectrum jacobi_eigenvalues(const SymMatrix& m, double tol = kJacobiTolerance,
                                   int sweep_cap = kJacobiSweepCap) {
  if (!(tol > 0.0)) throw InvalidInput("jacobi_eigenvalues: tol must be positive");
  if (!m.all_finite()) throw InvalidInput("jacobi_eigenvalues: non-finite matrix entry");
  const std::size_t n = m.order();
  std::vector<double> a(m.data().begin(), m.data().end());
  auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };

  const double threshold = tol * std::max(1.0, m.frobenius());
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * at(i, j) * at(i, j);
    return std::sqrt(s);
  };

  bool converged = off_norm() <= threshold;
  for (int sweep = 0; sweep < sweep_cap && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double tau = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::hypot(1.0, tau));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = t * c;
        at(p, p) -= t * apq;
        at(q, q) += t * apq;
        at(p, q) = at(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = at(r, p);
          const double arq = at(r, q);
          at(r, p) = at(p, r) = c * arp - s * arq;
          at(r, q) = at(q, r) = s * arp + c * arq;
        }
      }
    }
    converged = off_norm() <= threshold;
  }
  if (!converged)
    throw NumericError("jacobi_eigenvalues: no convergence after " + std::to_string(sweep_cap) +
                       " sweeps");

  Spectrum out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = at(i, i);
  std::sort(out.values.begin(), out.values.end());
  return out;
}

inline EsdStepFunction build_esd(const Spectrum& spec) {
  if (spec.values.empty()) throw InvalidInput("build_esd: empty spectrum");
  return EsdStepFunction(spec.values);
}

// Exact sup |F - G| over the merged jump set. Both functions are constant
// between jumps, so the right value at every jump (and the left limit, which
// is the right value at the preceding jump) covers the supremum.
inline double kolmogorov_distance(const EsdStepFunction& f, const EsdStepFunction& g) {
  if (f.size() == 0 || g.size() == 0) throw InvalidInput("kolmogorov_distance: empty ESD");
  const auto& a = f.jumps();
  const auto& b = g.jumps();
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0, ib = 0;
  double best = 0.0;
  while (ia < a.size() || ib < b.size()) {
    double x;
    if (ia == a.size()) x = b[ib];
    else if (ib == b.size()) x = a[ia];
    else x = std::min(a[ia], b[ib]);
    // left limit at x is the current (pre-advance) value
    best = std::max(best, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
    while (ia < a.size() && a[ia] == x) ++ia;
    while (ib < b.size() && b[ib] == x) ++ib;
    best = std::max(best, std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
  }
  return best;
}

// In-place H <- R H R^T. Touches rows and columns i, j only; O(n).
inline void conjugate_in_place(SymMatrix& h, const RotationEvent& e) {
  const std::size_t n = h.order();
  if (e.i >= n || e.j >= n) throw InvalidInput("apply_givens_conjugation: index out of range");
  if (e.i == e.j) throw InvalidInput("apply_givens_conjugation: i == j");
  const std::size_t i = e.i, j = e.j;
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  const double hii = h(i, i), hjj = h(j, j), hij = h(i, j);
  for (std::size_t r = 0; r < n; ++r) {
    if (r == i || r == j) continue;
    const double hri = h(r, i);
    const double hrj = h(r, j);
    h.set(r, i, c * hri + s * hrj);
    h.set(r, j, -s * hri + c * hrj);
  }
  // Difference form keeps a scalar 2x2 block exactly fixed.
  const double d = hjj - hii;
  const double shift = s * s * d + 2.0 * c * s * hij;
  h.set(i, i, hii + shift);
  h.set(j, j, hjj - shift);
  h.set(i, j, (c * c - s * s) * hij + c * s * d);
}

inline SymMatrix apply_givens_conjugation(SymMatrix h, const RotationEvent& e) {
  conjugate_in_place(h, e);
  return h;
}

inline SymMatrix top_left_block(const SymMatrix& h, std::size_t k) {
  if (k < 1 || k > h.order()) throw InvalidInput("top_left_block: k out of range");
  SymMatrix out(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) out.set(i, j, h(i, j));
  return out;
}

// Determinant by LU with partial pivoting.
inline double determinant(const DenseMatrix& m) {
  if (m.rows() != m.cols()) throw InvalidInput("determinant: matrix not square");
  const std::size_t n = m.rows();
  DenseMatrix a = m;
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (a(piv, col) == 0.0) return 0.0;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(piv, c), a(col, c));
      det = -det;
    }
    det *= a(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
    }
  }
  return det;
}

// max |O O^T - I|
inline double orthogonality_residual(const DenseMatrix& o) {
  const std::size_t n = o.rows();
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < o.cols(); ++k) s += o(i, k) * o(j, k);
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

// Haar measure on SO(n): Gram-Schmidt (twice, for stability) on the columns
// of a standard Gaussian matrix. Gram-Schmidt yields R with positive
// diagonal, which makes Q Haar on O(n); flipping the last column when
// det = -1 moves it to SO(n).
inline OrthogonalMatrix haar_so_n(std::size_t n, RandomSource& rng) {
  if (n < 1) throw InvalidInput("haar_so_n: n must be positive");
  DenseMatrix q(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q(i, j) = rng.normal();

  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < j; ++p) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r) dot += q(r, p) * q(r, j);
        for (std::size_t r = 0; r < n; ++r) q(r, j) -= dot * q(r, p);
      }
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) norm += q(r, j) * q(r, j);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < n; ++r) q(r, j) /= norm;
  }
  if (determinant(q) < 0.0)
    for (std::size_t r = 0; r < n; ++r) q(r, n - 1) = -q(r, n - 1);
  return OrthogonalMatrix(std::move(q));
}

namespace detail {

// g == c I, which every conjugation fixes exactly.
inline bool is_scalar_matrix(const SymMatrix& g) {
  const std::size_t n = g.order();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      if (g(i, j) != (i == j ? g(0, 0) : 0.0)) return false;
  return true;
}

}  // namespace detail

// O G O^T
inline SymMatrix conjugate(const OrthogonalMatrix& o, const SymMatrix& g) {
  const std::size_t n = g.order();
  if (o.order() != n) throw InvalidInput("conjugate: order mismatch");
  if (detail::is_scalar_matrix(g)) return g;
  DenseMatrix t(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < n; ++l) {
      const double oil = o(i, l);
      if (oil == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) t(i, j) += oil * g(l, j);
    }
  SymMatrix out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < n; ++l) s += t(i, l) * o(j, l);
      out.set(i, j, s);
    }
  return out;
}

// Leading k x k block of O G O^T without forming the full product.
inline SymMatrix compressed_conjugate(const OrthogonalMatrix& o, const SymMatrix& g,
                                      std::size_t k) {
  const std::size_t n = g.order();
  if (o.order() != n) throw InvalidInput("compressed_conjugate: order mismatch");
  if (k < 1 || k > n) throw InvalidInput("compressed_conjugate: k out of range");
  if (detail::is_scalar_matrix(g)) return top_left_block(g, k);
  DenseMatrix t(k, n);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t l = 0; l < n; ++l) {
      const double oil = o(i, l);
      for (std::size_t j = 0; j < n; ++j) t(i, j) += oil * g(l, j);
    }
  SymMatrix out(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < n; ++l) s += t(i, l) * o(j, l);
      out.set(i, j, s);
    }
  return out;
}

// GOE-like symmetric matrix: off-diagonal N(0, 1/n), diagonal N(0, 2/n).
inline SymMatrix goe_matrix(std::size_t n, RandomSource& rng) {
  SymMatrix g(n);
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      g.set(i, j, rng.normal(0.0, i == j ? std::numbers::sqrt2 * sd : sd));
  return g;
}

}  // namespace cmlab
