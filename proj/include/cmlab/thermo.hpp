#pragma once

// Kac walk coupled to a Gaussian thermostat, acting on the columns of an
// n x n real matrix. One coupled step is a Kac rotation of a column pair
// followed by one thermostat refresh of a single column, so at most three
// columns change per step.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "cmlab/cmbounds.hpp"
#include "cmlab/errors.hpp"
#include "cmlab/kacwalk.hpp"
#include "cmlab/matcore.hpp"
#include "cmlab/random.hpp"

namespace cmlab {

struct ThermostatParams {
  std::size_t n = 2;
  double beta = 1.0;  // inverse temperature; thermostat entries have variance 1/beta
  double mu = 1.0;    // thermostat rate; enters the bounds only

  void validate() const {
    if (n < 1) throw InvalidInput("ThermostatParams: n must be >= 1");
    if (!(beta > 0.0)) throw InvalidInput("ThermostatParams: beta must be positive");
    if (!(mu > 0.0)) throw InvalidInput("ThermostatParams: mu must be positive");
  }
};

struct ThermostatEvent {
  std::size_t j = 0;
  double theta = 0.0;
  std::vector<double> omega;
};

struct GaussMatrixState {
  DenseMatrix g;
  std::uint64_t step_count = 0;
};

struct CoupledEvent {
  RotationEvent kac;
  ThermostatEvent thermostat;
};

// Exact draw from the invariant product measure: iid N(0, 1/beta) entries.
inline GaussMatrixState sample_invariant(const ThermostatParams& p, RandomSource& rng) {
  p.validate();
  GaussMatrixState s{DenseMatrix(p.n, p.n), 0};
  const double sd = 1.0 / std::sqrt(p.beta);
  for (double& v : s.g.data()) v = rng.normal(0.0, sd);
  return s;
}

inline ThermostatEvent sample_thermostat_event(const ThermostatParams& p, RandomSource& rng) {
  ThermostatEvent e;
  e.j = rng.index(p.n);
  e.theta = 2.0 * std::numbers::pi * rng.uniform();
  e.omega.resize(p.n);
  const double sd = 1.0 / std::sqrt(p.beta);
  for (double& w : e.omega) w = rng.normal(0.0, sd);
  return e;
}

// g_ij <- g_ij cos(theta) + omega_i sin(theta) for every row i of column j.
inline void apply_thermostat_event(GaussMatrixState& s, const ThermostatEvent& e) {
  const std::size_t n = s.g.rows();
  if (e.j >= s.g.cols()) throw InvalidInput("apply_thermostat_event: column out of range");
  if (e.omega.size() != n) throw InvalidInput("apply_thermostat_event: omega length mismatch");
  const double c = std::cos(e.theta);
  const double sn = std::sin(e.theta);
  for (std::size_t i = 0; i < n; ++i) s.g(i, e.j) = s.g(i, e.j) * c + e.omega[i] * sn;
}

// Kac collision on columns: col_i <- c col_i + s col_j, col_j <- -s col_i + c col_j.
inline void rotate_columns(DenseMatrix& g, const RotationEvent& e) {
  if (e.i >= g.cols() || e.j >= g.cols() || e.i == e.j)
    throw InvalidInput("rotate_columns: invalid column pair");
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const double a = g(r, e.i);
    const double b = g(r, e.j);
    g(r, e.i) = c * a + s * b;
    g(r, e.j) = -s * a + c * b;
  }
}

inline ThermostatEvent thermostat_step(GaussMatrixState& s, const ThermostatParams& p,
                                       RandomSource& rng) {
  ThermostatEvent e = sample_thermostat_event(p, rng);
  apply_thermostat_event(s, e);
  ++s.step_count;
  return e;
}

inline void apply_coupled_event(GaussMatrixState& s, const CoupledEvent& e) {
  rotate_columns(s.g, e.kac);
  apply_thermostat_event(s, e.thermostat);
  ++s.step_count;
}

inline CoupledEvent coupled_step(GaussMatrixState& s, const ThermostatParams& p,
                                 RandomSource& rng) {
  if (p.n < 2) throw InvalidInput("coupled_step: n must be >= 2");
  CoupledEvent e{sample_rotation(p.n, rng), sample_thermostat_event(p, rng)};
  apply_coupled_event(s, e);
  return e;
}

// mu / (2n). mu == 0 returns a zero gap flagged as degenerate.
inline GapValue thermostat_gap_formula(const ThermostatParams& p) {
  if (p.n < 1) throw InvalidInput("thermostat_gap_formula: n must be >= 1");
  if (p.mu < 0.0) throw InvalidInput("thermostat_gap_formula: mu must be nonnegative");
  GapValue g{p.mu / (2.0 * static_cast<double>(p.n)), GapProvenance::kFormula};
  g.degenerate = p.mu == 0.0;
  return g;
}

// Three changed columns, each shifting the ESD by at most 3/k, hitting the
// first k columns with probability at most 3k/n.
inline TripleNormBound thermostat_triple_norm_bound(std::size_t n, std::size_t k) {
  CompressionSpec{n, k}.validate();
  return {27.0 / (2.0 * static_cast<double>(k) * static_cast<double>(n)),
          NormProvenance::kAnalytic};
}

// S^T H S with S the first k columns of the chain state, before
// symmetrization.
inline DenseMatrix gaussian_compression_raw(const SymMatrix& h, const GaussMatrixState& s,
                                            std::size_t k) {
  const std::size_t n = h.order();
  if (s.g.rows() != n) throw InvalidInput("gaussian_compression: dimension mismatch");
  if (k < 1 || k > s.g.cols()) throw InvalidInput("gaussian_compression: k out of range");
  // T = H S  (n x k)
  DenseMatrix t(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < n; ++l) {
      const double hil = h(i, l);
      if (hil == 0.0) continue;
      for (std::size_t c = 0; c < k; ++c) t(i, c) += hil * s.g(l, c);
    }
  DenseMatrix a(k, k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c) {
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += s.g(i, r) * t(i, c);
      a(r, c) = v;
    }
  return a;
}

inline SymMatrix gaussian_compression(const SymMatrix& h, const GaussMatrixState& s,
                                      std::size_t k) {
  return SymMatrix::symmetrized(gaussian_compression_raw(h, s, k));
}

}  // namespace cmlab
