#pragma once

// Kac walk on SO(n), carried as the conjugated matrix H = O G O^T rather than
// the group element O. One step draws a uniform coordinate plane and a
// uniform angle and conjugates H by the corresponding Givens rotation.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>

#include "cmlab/cmbounds.hpp"
#include "cmlab/errors.hpp"
#include "cmlab/matcore.hpp"
#include "cmlab/random.hpp"

namespace cmlab {

struct CompressionSpec {
  std::size_t n = 2;
  std::size_t k = 1;

  void validate() const {
    if (k < 1 || k > n)
      throw InvalidInput("CompressionSpec: need 1 <= k <= n (k=" + std::to_string(k) +
                         ", n=" + std::to_string(n) + ")");
  }
};

inline constexpr std::uint64_t kDefaultAuditCadence = 10'000;
inline constexpr double kSpectralDriftTolerance = 1e-8;

class KacChainState {
 public:
  explicit KacChainState(SymMatrix h, std::uint64_t audit_cadence = kDefaultAuditCadence)
      : h_(std::move(h)), seed_spectrum_(jacobi_eigenvalues(h_)), audit_cadence_(audit_cadence) {}

  [[nodiscard]] const SymMatrix& matrix() const noexcept { return h_; }
  [[nodiscard]] const Spectrum& seed_spectrum() const noexcept { return seed_spectrum_; }
  [[nodiscard]] std::uint64_t step_count() const noexcept { return step_count_; }
  [[nodiscard]] std::uint64_t audit_cadence() const noexcept { return audit_cadence_; }
  [[nodiscard]] std::size_t order() const noexcept { return h_.order(); }

  // Largest elementwise deviation of the current spectrum from the seed's.
  [[nodiscard]] double spectral_drift() const {
    const Spectrum now = jacobi_eigenvalues(h_);
    double worst = 0.0;
    for (std::size_t i = 0; i < now.size(); ++i)
      worst = std::max(worst, std::abs(now.values[i] - seed_spectrum_.values[i]));
    return worst;
  }

  void audit() const {
    double scale = 1.0;
    for (double v : seed_spectrum_.values) scale = std::max(scale, std::abs(v));
    const double drift = spectral_drift();
    if (drift > kSpectralDriftTolerance * scale)
      throw NumericError("KacChainState: spectral drift " + std::to_string(drift) +
                         " after " + std::to_string(step_count_) + " steps");
  }

  // Applies a given rotation and advances the step counter.
  void apply(const RotationEvent& e) {
    conjugate_in_place(h_, e);
    ++step_count_;
    if (audit_cadence_ != 0 && step_count_ % audit_cadence_ == 0) audit();
  }

 private:
  SymMatrix h_;
  Spectrum seed_spectrum_;
  std::uint64_t step_count_ = 0;
  std::uint64_t audit_cadence_ = kDefaultAuditCadence;
};

// Uniform unordered pair i < j and theta uniform on (-pi, pi].
inline RotationEvent sample_rotation(std::size_t n, RandomSource& rng) {
  if (n < 2) throw InvalidInput("kac_step: n must be >= 2");
  std::size_t p = rng.index(n * (n - 1) / 2);
  std::size_t i = 0;
  while (p >= n - 1 - i) {
    p -= n - 1 - i;
    ++i;
  }
  const double theta = std::numbers::pi - 2.0 * std::numbers::pi * rng.uniform();
  return {i, i + 1 + p, theta};
}

inline RotationEvent kac_step(KacChainState& state, RandomSource& rng) {
  const RotationEvent e = sample_rotation(state.order(), rng);
  state.apply(e);
  return e;
}

// Stationary start: H = O G O^T with O Haar on SO(n).
inline KacChainState stationary_kac_state(const SymMatrix& g, RandomSource& rng,
                                          std::uint64_t audit_cadence = kDefaultAuditCadence) {
  return KacChainState(conjugate(haar_so_n(g.order(), rng), g), audit_cadence);
}

// Single random rotation applied to G (not the stationary law).
inline SymMatrix single_rotation_sample(const SymMatrix& g, RandomSource& rng) {
  return apply_givens_conjugation(g, sample_rotation(g.order(), rng));
}

inline GapValue kac_gap_formula(std::size_t n) {
  if (n < 2) throw InvalidInput("kac_gap_formula: n must be >= 2");
  const double nd = static_cast<double>(n);
  return {(nd + 2.0) / (2.0 * (nd - 1.0) * nd), GapProvenance::kFormula};
}

// Rank-two perturbation changes the ESD by at most 2/k, and the walk hits
// the leading block with probability at most 2k/n.
inline TripleNormBound kac_triple_norm_bound(std::size_t n, std::size_t k) {
  CompressionSpec{n, k}.validate();
  return {4.0 / (static_cast<double>(k) * static_cast<double>(n)), NormProvenance::kAnalytic};
}

// ||F_A - F||_inf for A the leading k x k block of the current state.
inline double compressed_esd_statistic(const KacChainState& state, const CompressionSpec& spec,
                                       const EsdStepFunction& reference) {
  spec.validate();
  if (spec.n != state.order()) throw InvalidInput("compressed_esd_statistic: order mismatch");
  if (reference.size() == 0) throw InvalidInput("compressed_esd_statistic: empty reference");
  const auto esd = build_esd(jacobi_eigenvalues(top_left_block(state.matrix(), spec.k)));
  return kolmogorov_distance(esd, reference);
}

}  // namespace cmlab
