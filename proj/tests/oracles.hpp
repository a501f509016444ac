#pragma once

// Independent reference computations used only by the tests. None of these
// call into the code paths they are used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "cmlab/matcore.hpp"

namespace oracle {

// Householder reduction to tridiagonal form: diagonal d, off-diagonal e.
struct Tridiagonal {
  std::vector<double> d, e;
};

inline Tridiagonal householder_tridiagonal(const cmlab::SymMatrix& m) {
  const std::size_t n = m.order();
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = m(i, j);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) alpha += a[i * n + k] * a[i * n + k];
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (a[(k + 1) * n + k] > 0) alpha = -alpha;
    std::vector<double> v(n, 0.0);
    v[k + 1] = a[(k + 1) * n + k] - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = a[i * n + k];
    double vv = 0.0;
    for (double x : v) vv += x * x;
    if (vv == 0.0) continue;
    // A <- (I - 2vv^T/vv) A (I - 2vv^T/vv)
    std::vector<double> p(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) p[i] += a[i * n + j] * v[j];
    double vp = 0.0;
    for (std::size_t i = 0; i < n; ++i) vp += v[i] * p[i];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        a[i * n + j] += -2.0 * (v[i] * p[j] + p[i] * v[j]) / vv + 4.0 * vp * v[i] * v[j] / (vv * vv);
  }
  Tridiagonal t;
  for (std::size_t i = 0; i < n; ++i) t.d.push_back(a[i * n + i]);
  for (std::size_t i = 0; i + 1 < n; ++i) t.e.push_back(a[(i + 1) * n + i]);
  return t;
}

// Sturm count: number of eigenvalues of the tridiagonal matrix below x.
inline std::size_t count_below(const Tridiagonal& t, double x) {
  std::size_t negatives = 0;
  double q = 1.0;
  for (std::size_t i = 0; i < t.d.size(); ++i) {
    const double off = i == 0 ? 0.0 : t.e[i - 1] * t.e[i - 1];
    q = t.d[i] - x - (i == 0 ? 0.0 : off / q);
    if (q == 0.0) q = -1e-300;
    if (q < 0.0) ++negatives;
  }
  return negatives;
}

// Ascending eigenvalues by bisection on the Sturm-type count.
inline std::vector<double> bisection_eigenvalues(const cmlab::SymMatrix& m, double tol = 1e-12) {
  const std::size_t n = m.order();
  const Tridiagonal t = householder_tridiagonal(m);
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) r += std::abs(m(i, j));
    lo = std::min(lo, m(i, i) - r);
    hi = std::max(hi, m(i, i) + r);
  }
  lo -= 1.0;
  hi += 1.0;
  std::vector<double> out(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    double a = lo, b = hi;
    while (b - a > tol) {
      const double mid = 0.5 * (a + b);
      if (count_below(t, mid) > idx) b = mid;
      else a = mid;
    }
    out[idx] = 0.5 * (a + b);
  }
  return out;
}

// sup_x |F(x) - G(x)| by direct counting at every jump and at midpoints.
inline double sup_distance(std::vector<double> a, std::vector<double> b) {
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  std::sort(pts.begin(), pts.end());
  std::vector<double> probes = pts;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) probes.push_back(0.5 * (pts[i] + pts[i + 1]));
  probes.push_back(pts.front() - 1.0);
  auto cdf = [](const std::vector<double>& v, double x) {
    std::size_t c = 0;
    for (double y : v) c += y <= x ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(v.size());
  };
  double best = 0.0;
  for (double x : probes) best = std::max(best, std::abs(cdf(a, x) - cdf(b, x)));
  return best;
}

// Longest nondecreasing subsequence by subset enumeration (n <= 20).
inline std::size_t brute_force_lis(const std::vector<int>& seq) {
  const std::size_t n = seq.size();
  std::size_t best = 0;
  for (std::uint32_t mask = 1; mask < (1U << n); ++mask) {
    int prev = 0;
    bool first = true, ok = true;
    std::size_t len = 0;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (!((mask >> i) & 1U)) continue;
      if (!first && seq[i] < prev) ok = false;
      prev = seq[i];
      first = false;
      ++len;
    }
    if (ok) best = std::max(best, len);
  }
  return best;
}

// prod_{k=0}^{terms-1} (1 - 4^{-(k+1)})^{-2^k} in 50-digit decimal arithmetic.
inline double mgf_product_high_precision(int terms) {
  using big = boost::multiprecision::cpp_dec_float_50;
  big logsum = 0;
  big four_pow = 4;
  big two_pow = 1;
  for (int k = 0; k < terms; ++k) {
    logsum -= two_pow * boost::multiprecision::log(big(1) - big(1) / four_pow);
    four_pow *= 4;
    two_pow *= 2;
  }
  return static_cast<double>(boost::multiprecision::exp(logsum));
}

// Gap of the one-step ASEP kernel when the closed form is evaluated at the
// kernel's own odds ratio rho = (q/2)/(1 - q/2), divided by the n-1 bonds.
// Single-particle reduction: biased reflecting walk with rates p = 1 - q/2,
// p' = q/2, whose generator gap is 1 - 2 sqrt(p p') cos(pi/n).
inline double kernel_odds_gap(std::size_t n, double q) {
  const double p = 1.0 - 0.5 * q;
  const double pp = 0.5 * q;
  return (1.0 - 2.0 * std::sqrt(p * pp) * std::cos(std::numbers::pi / static_cast<double>(n))) /
         static_cast<double>(n - 1);
}

// Chi-square statistic of observed counts against uniform expectation.
inline double chi_square_uniform(const std::vector<std::size_t>& counts) {
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  const double expected = total / static_cast<double>(counts.size());
  double chi = 0.0;
  for (auto c : counts) chi += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  return chi;
}

}  // namespace oracle
