#pragma once

// Closed-form concentration bounds of the form C * exp(-rate * r) and the
// estimators for their ingredients: spectral gaps, triple norms, Dirichlet
// forms and the product constant of the moment-generating-function recursion.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include "cmlab/errors.hpp"
#include "cmlab/matcore.hpp"
#include "cmlab/random.hpp"

namespace cmlab {

enum class GapProvenance { kFormula, kExactDiagonalization };

struct GapValue {
  double lambda1 = 0.0;
  GapProvenance provenance = GapProvenance::kFormula;
  // lambda1 == 0: the formula was evaluated at a degenerate parameter.
  bool degenerate = false;
};

enum class NormProvenance { kAnalytic, kEmpirical };

struct TripleNormBound {
  double delta = 0.0;
  NormProvenance provenance = NormProvenance::kAnalytic;
  double standard_error = 0.0;
};

enum class Sidedness { kOneSided, kTwoSided };

// C * exp(-rate * r), nonincreasing in r.
struct TailBoundCurve {
  double prefactor = 1.0;
  double rate = 0.0;

  [[nodiscard]] double evaluate(double r) const noexcept { return prefactor * std::exp(-rate * r); }
  // Reporting value: probabilities never exceed one.
  [[nodiscard]] double clamped(double r) const noexcept { return std::min(1.0, evaluate(r)); }
};

struct DirichletEstimate {
  double qff = 0.0;
  double varf = 0.0;
  std::size_t sample_count = 0;
  double qff_se = 0.0;
  double varf_se = 0.0;
};

inline TailBoundCurve generic_tail_bound(const GapValue& gap, const TripleNormBound& delta,
                                         Sidedness sides = Sidedness::kTwoSided) {
  if (!(delta.delta > 0.0))
    throw InvalidInput("generic_tail_bound: delta must be positive (statistic is a.s. constant)");
  if (gap.lambda1 < 0.0) throw InvalidInput("generic_tail_bound: negative spectral gap");
  return {sides == Sidedness::kOneSided ? 3.0 : 6.0, 0.5 * std::sqrt(gap.lambda1 / delta.delta)};
}

inline TailBoundCurve kac_esd_curve(std::size_t k) {
  if (k < 1) throw InvalidInput("kac_esd_bound: k must be >= 1");
  const double kd = static_cast<double>(k);
  return {12.0 * std::sqrt(kd), std::sqrt(kd / 32.0)};
}

inline double kac_esd_bound(std::size_t k, double r) { return kac_esd_curve(k).evaluate(r); }

inline TailBoundCurve thermostat_esd_curve(std::size_t k, double mu) {
  if (k < 1) throw InvalidInput("thermostat_esd_bound: k must be >= 1");
  if (!(mu > 0.0)) throw InvalidInput("thermostat_esd_bound: mu must be positive");
  const double kd = static_cast<double>(k);
  return {12.0 * std::sqrt(kd), std::sqrt(kd * mu / 108.0)};
}

inline double thermostat_esd_bound(std::size_t k, double mu, double r) {
  return thermostat_esd_curve(k, mu).evaluate(r);
}

inline TailBoundCurve asep_midpoint_curve(std::size_t n, double c, double alpha) {
  if (n < 2 || n % 2 != 0) throw InvalidInput("asep_midpoint_bound: n must be even and >= 2");
  const double nd = static_cast<double>(n);
  return {6.0, 0.5 * std::sqrt(c * c * (nd - 1.0) / std::pow(nd, 2.0 * alpha))};
}

inline double asep_midpoint_bound(std::size_t n, double c, double alpha, double r) {
  return asep_midpoint_curve(n, c, alpha).evaluate(r);
}

inline TailBoundCurve asep_lis_curve(std::size_t n, double c, double alpha) {
  if (n < 1) throw InvalidInput("asep_lis_bound: n must be positive");
  return {6.0, 0.5 * c / std::pow(static_cast<double>(n), alpha)};
}

inline double asep_lis_bound(std::size_t n, double c, double alpha, double r) {
  return asep_lis_curve(n, c, alpha).evaluate(r);
}

struct MgfProduct {
  double value = 1.0;
  // Upper bound on (infinite product) - value.
  double remainder_bound = 0.0;
};

// prod_{k=0}^{K-1} (1 - 4^{-(k+1)})^{-2^k}
//
// Tail of the log-sum: -2^k log(1 - x) <= 2^k x / (1 - x) with x = 4^{-(k+1)},
// so sum_{k>=K} <= 2^{-K-1} / (1 - 4^{-(K+1)}).
inline MgfProduct mgf_product_constant(int terms) {
  if (terms < 1) throw InvalidInput("mgf_product_constant: need at least one term");
  double log_sum = 0.0;
  for (int k = 0; k < terms; ++k) {
    const double x = std::ldexp(1.0, -2 * (k + 1));
    log_sum += -std::ldexp(1.0, k) * std::log1p(-x);
  }
  MgfProduct out;
  out.value = std::exp(log_sum);
  const double tail_log =
      std::ldexp(1.0, -terms - 1) / (1.0 - std::ldexp(1.0, -2 * (terms + 1)));
  out.remainder_bound = out.value * std::expm1(tail_log);
  return out;
}

namespace detail {

struct RunningMoments {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    ++count;
    const double d = x - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (x - mean);
  }
  [[nodiscard]] double variance() const noexcept {
    return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
  }
  [[nodiscard]] double standard_error() const noexcept {
    return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
  }
};

}  // namespace detail

// Empirical triple norm: sup over sampled states x of
// (1/2) E[(f(X_1) - f(X_0))^2 | X_0 = x], each conditional mean estimated from
// inner_samples one-step transitions. The reported standard error is that of
// the maximizing inner mean.
//
//   sample_state(rng) -> State
//   step(const State&, rng) -> State
//   f(const State&) -> double
template <class SampleState, class Step, class Observable>
TripleNormBound triple_norm_estimate(SampleState&& sample_state, Step&& step, Observable&& f,
                                     std::size_t state_samples, std::size_t inner_samples,
                                     RandomSource& rng) {
  if (state_samples < 1 || inner_samples < 1)
    throw InvalidInput("triple_norm_estimate: sample counts must be >= 1");
  TripleNormBound out{0.0, NormProvenance::kEmpirical, 0.0};
  for (std::size_t s = 0; s < state_samples; ++s) {
    const auto x0 = sample_state(rng);
    const double f0 = f(x0);
    detail::RunningMoments mom;
    for (std::size_t t = 0; t < inner_samples; ++t) {
      const auto x1 = step(x0, rng);
      const double d = f(x1) - f0;
      mom.add(0.5 * d * d);
    }
    if (s == 0 || mom.mean > out.delta) {
      out.delta = mom.mean;
      out.standard_error = mom.standard_error();
    }
  }
  return out;
}

// Monte Carlo Dirichlet form and variance under the stationary law.
template <class SampleState, class Step, class Observable>
DirichletEstimate dirichlet_estimate(SampleState&& sample_state, Step&& step, Observable&& f,
                                     std::size_t samples, RandomSource& rng) {
  if (samples < 2) throw InvalidInput("dirichlet_estimate: need at least two samples");
  detail::RunningMoments q;
  std::vector<double> values;
  values.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto x0 = sample_state(rng);
    const auto x1 = step(x0, rng);
    const double f0 = f(x0);
    const double d = f(x1) - f0;
    q.add(0.5 * d * d);
    values.push_back(f0);
  }
  detail::RunningMoments v;
  for (double x : values) v.add(x);
  const double var = v.variance();
  double m4 = 0.0;
  for (double x : values) m4 += std::pow(x - v.mean, 4);
  m4 /= static_cast<double>(samples);
  DirichletEstimate out;
  out.qff = q.mean;
  out.qff_se = q.standard_error();
  out.varf = var;
  out.varf_se = std::sqrt(std::max(0.0, m4 - var * var) / static_cast<double>(samples));
  out.sample_count = samples;
  return out;
}

// Exact Dirichlet form and variance for a finite chain with stationary law
// pi and row-stochastic kernel p.
inline DirichletEstimate dirichlet_exact(std::span<const double> pi, const DenseMatrix& p,
                                         std::span<const double> f) {
  const std::size_t n = pi.size();
  if (p.rows() != n || p.cols() != n || f.size() != n)
    throw InvalidInput("dirichlet_exact: dimension mismatch");
  double qff = 0.0, mean = 0.0, second = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    mean += pi[x] * f[x];
    second += pi[x] * f[x] * f[x];
    for (std::size_t y = 0; y < n; ++y) {
      const double d = f[y] - f[x];
      qff += 0.5 * pi[x] * p(x, y) * d * d;
    }
  }
  DirichletEstimate out;
  out.qff = qff;
  out.varf = second - mean * mean;
  out.sample_count = 0;
  return out;
}

// Q(f,f) - lambda1 Var f; nonnegative for a reversible chain.
inline double poincare_residual(const GapValue& gap, const DirichletEstimate& d) {
  return d.qff - gap.lambda1 * d.varf;
}

inline double poincare_residual_se(const GapValue& gap, const DirichletEstimate& d) {
  return std::hypot(d.qff_se, gap.lambda1 * d.varf_se);
}

}  // namespace cmlab
