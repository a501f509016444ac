#pragma once

// Fixed-particle-number asymmetric exclusion on sites 1..n, viewed as a
// random walk with bit 1 = step up. One step picks a bond (i, i+1) uniformly
// among the n-1 bonds; a (1,0) pair swaps with probability 1 - q/2 and a
// (0,1) pair with probability q/2.
//
// Also: exact stationary law and spectral gap for small n, walk observables,
// blocking (product) measures and their conditioned versions.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cmlab/cmbounds.hpp"
#include "cmlab/errors.hpp"
#include "cmlab/matcore.hpp"
#include "cmlab/random.hpp"

namespace cmlab {

struct AsepConfig {
  std::vector<std::uint8_t> bits;

  static AsepConfig from_string(std::string_view s) {
    AsepConfig c;
    c.bits.reserve(s.size());
    for (char ch : s) {
      if (ch != '0' && ch != '1') throw InvalidInput("AsepConfig: expected a 0/1 string");
      c.bits.push_back(ch == '1' ? 1 : 0);
    }
    return c;
  }

  [[nodiscard]] std::size_t size() const noexcept { return bits.size(); }
  [[nodiscard]] std::size_t particle_count() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
  [[nodiscard]] std::string to_string() const {
    std::string s;
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
  }

  friend bool operator==(const AsepConfig&, const AsepConfig&) = default;
};

struct AsepParams {
  std::size_t n = 2;
  double q = 1.0;
  double c = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();

  [[nodiscard]] double delta() const noexcept { return 0.5 * (q + 1.0 / q); }

  static AsepParams from_q(std::size_t n, double q) {
    if (n < 2) throw InvalidInput("AsepParams: n must be >= 2");
    if (!(q > 0.0 && q <= 1.0)) throw InvalidInput("AsepParams: q must lie in (0, 1]");
    return {n, q};
  }

  // q = 1 - c / n^alpha, required to land in (0, 1).
  static AsepParams from_scaling(std::size_t n, double c, double alpha) {
    if (n < 2) throw InvalidInput("AsepParams: n must be >= 2");
    if (!(c > 0.0)) throw InvalidInput("AsepParams: c must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("AsepParams: alpha must lie in (0, 1)");
    const double q = 1.0 - c / std::pow(static_cast<double>(n), alpha);
    if (!(q > 0.0 && q < 1.0))
      throw InvalidInput("AsepParams: q = 1 - c/n^alpha = " + std::to_string(q) +
                         " is outside (0, 1)");
    return {n, q, c, alpha};
  }
};

// Swap probability for the ordered pair (left, right) at a bond.
inline double asep_swap_probability(std::uint8_t left, std::uint8_t right, double q) noexcept {
  if (left == 1 && right == 0) return 1.0 - 0.5 * q;
  if (left == 0 && right == 1) return 0.5 * q;
  return 0.0;
}

// Bond (bond, bond+1), zero-based; swaps when accept_draw < swap probability.
inline bool apply_asep_move(AsepConfig& cfg, std::size_t bond, double accept_draw, double q) {
  if (bond + 1 >= cfg.size()) throw InvalidInput("apply_asep_move: bond out of range");
  auto& b = cfg.bits;
  if (accept_draw < asep_swap_probability(b[bond], b[bond + 1], q)) {
    std::swap(b[bond], b[bond + 1]);
    return true;
  }
  return false;
}

// One chain step in place; returns the chosen bond.
inline std::size_t asep_step(AsepConfig& cfg, const AsepParams& p, RandomSource& rng) {
  const std::size_t n = cfg.size();
  if (n < 2) throw InvalidInput("asep_step: n must be >= 2");
  const std::size_t bond = rng.index(n - 1);
  const double u = rng.uniform();
  apply_asep_move(cfg, bond, u, p.q);
  return bond;
}

// ---------------------------------------------------------------------------
// Observables

inline std::vector<int> walk_heights(const AsepConfig& cfg) {
  std::vector<int> h(cfg.size());
  int level = 0;
  for (std::size_t i = 0; i < cfg.size(); ++i) {
    level += cfg.bits[i] ? 1 : -1;
    h[i] = level;
  }
  return h;
}

inline int midpoint_height(const AsepConfig& cfg) {
  const std::size_t n = cfg.size();
  if (n == 0 || n % 2 != 0) throw InvalidInput("midpoint_height: n must be even");
  int h = 0;
  for (std::size_t i = 0; i < n / 2; ++i) h += cfg.bits[i] ? 1 : -1;
  return h;
}

// Longest nondecreasing subsequence of the height sequence, O(n log n).
inline std::size_t lis_length(const AsepConfig& cfg) {
  if (cfg.size() == 0) throw InvalidInput("lis_length: empty configuration");
  std::vector<int> tails;
  int level = 0;
  for (auto bit : cfg.bits) {
    level += bit ? 1 : -1;
    auto it = std::upper_bound(tails.begin(), tails.end(), level);
    if (it == tails.end()) tails.push_back(level);
    else *it = level;
  }
  return tails.size();
}

struct WalkObservables {
  std::vector<int> heights;
  int midpoint = 0;
  std::size_t lis = 0;
  std::size_t count = 0;
};

inline WalkObservables observe(const AsepConfig& cfg) {
  WalkObservables o;
  o.heights = walk_heights(cfg);
  o.midpoint = midpoint_height(cfg);
  o.lis = lis_length(cfg);
  o.count = cfg.particle_count();
  return o;
}

// ---------------------------------------------------------------------------
// Exact small-n oracles

inline constexpr std::size_t kStationaryCapacity = 100'000;
inline constexpr std::size_t kGapCapacity = 10'000;

inline double binomial(std::size_t n, std::size_t m) {
  if (m > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= m; ++i)
    r = r * static_cast<double>(n - m + i) / static_cast<double>(i);
  return std::round(r);
}

// Stationary law over all configurations with m particles. Configurations are
// bitmasks, bit j set <=> particle at site j+1; kept sorted ascending.
struct StationaryVector {
  std::size_t n = 0;
  std::size_t m = 0;
  double q = 1.0;
  std::vector<std::uint64_t> states;
  std::vector<double> probabilities;

  [[nodiscard]] std::size_t size() const noexcept { return states.size(); }

  [[nodiscard]] std::size_t index_of(std::uint64_t mask) const {
    auto it = std::lower_bound(states.begin(), states.end(), mask);
    if (it == states.end() || *it != mask) throw InvalidInput("StationaryVector: unknown state");
    return static_cast<std::size_t>(it - states.begin());
  }

  [[nodiscard]] AsepConfig config(std::size_t idx) const {
    AsepConfig c;
    c.bits.resize(n);
    for (std::size_t j = 0; j < n; ++j) c.bits[j] = (states[idx] >> j) & 1U;
    return c;
  }
};

inline std::uint64_t to_mask(const AsepConfig& cfg) {
  std::uint64_t mask = 0;
  for (std::size_t j = 0; j < cfg.size(); ++j)
    if (cfg.bits[j]) mask |= std::uint64_t{1} << j;
  return mask;
}

namespace detail {

inline std::vector<std::uint64_t> enumerate_masks(std::size_t n, std::size_t m,
                                                  std::size_t capacity) {
  if (n < 1 || n > 62) throw CapacityError("ASEP enumeration: n must lie in [1, 62]");
  if (m > n) throw InvalidInput("ASEP enumeration: m > n");
  const double count = binomial(n, m);
  if (count > static_cast<double>(capacity))
    throw CapacityError("ASEP enumeration: C(" + std::to_string(n) + "," + std::to_string(m) +
                        ") = " + std::to_string(static_cast<long long>(count)) +
                        " exceeds capacity " + std::to_string(capacity));
  std::vector<std::uint64_t> out;
  out.reserve(static_cast<std::size_t>(count));
  if (m == 0) {
    out.push_back(0);
    return out;
  }
  // Gosper's hack walks masks with m set bits in increasing order.
  std::uint64_t x = (std::uint64_t{1} << m) - 1;
  const std::uint64_t limit = std::uint64_t{1} << n;
  while (x < limit) {
    out.push_back(x);
    const std::uint64_t c = x & (~x + 1);
    const std::uint64_t r = x + c;
    x = (((r ^ x) >> 2) / c) | r;
  }
  return out;
}

}  // namespace detail

// Detailed balance for the swap probabilities gives weight r^{sum of particle
// positions} with r = (2 - q)/q.
inline StationaryVector exact_stationary(std::size_t n, std::size_t m, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw InvalidInput("exact_stationary: q must lie in (0, 1]");
  StationaryVector sv;
  sv.n = n;
  sv.m = m;
  sv.q = q;
  sv.states = detail::enumerate_masks(n, m, kStationaryCapacity);
  const double log_r = std::log((2.0 - q) / q);
  std::vector<double> logw(sv.states.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < sv.states.size(); ++s) {
    double pos = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if ((sv.states[s] >> j) & 1U) pos += static_cast<double>(j + 1);
    logw[s] = pos * log_r;
    top = std::max(top, logw[s]);
  }
  double total = 0.0;
  sv.probabilities.resize(sv.states.size());
  for (std::size_t s = 0; s < sv.states.size(); ++s) {
    sv.probabilities[s] = std::exp(logw[s] - top);
    total += sv.probabilities[s];
  }
  for (double& p : sv.probabilities) p /= total;
  return sv;
}

// Full one-step kernel over the enumerated state space.
inline DenseMatrix asep_transition_matrix(const StationaryVector& sv) {
  const std::size_t size = sv.size();
  const std::size_t n = sv.n;
  DenseMatrix p(size, size);
  const double bond_weight = 1.0 / static_cast<double>(n - 1);
  for (std::size_t s = 0; s < size; ++s) {
    const std::uint64_t x = sv.states[s];
    double stay = 1.0;
    for (std::size_t b = 0; b + 1 < n; ++b) {
      const auto left = static_cast<std::uint8_t>((x >> b) & 1U);
      const auto right = static_cast<std::uint8_t>((x >> (b + 1)) & 1U);
      const double prob = asep_swap_probability(left, right, sv.q) * bond_weight;
      if (prob == 0.0) continue;
      const std::uint64_t y = x ^ (std::uint64_t{3} << b);
      p(s, sv.index_of(y)) += prob;
      stay -= prob;
    }
    p(s, s) += stay;
  }
  return p;
}

// max |pi(x) P(x,y) - pi(y) P(y,x)|
inline double detailed_balance_residual(const StationaryVector& sv, const DenseMatrix& p) {
  double worst = 0.0;
  for (std::size_t x = 0; x < sv.size(); ++x)
    for (std::size_t y = x + 1; y < sv.size(); ++y)
      worst = std::max(worst, std::abs(sv.probabilities[x] * p(x, y) -
                                       sv.probabilities[y] * p(y, x)));
  return worst;
}

// D^{1/2} P D^{-1/2}, symmetric for a reversible kernel.
inline DenseMatrix symmetrized_kernel(const StationaryVector& sv, const DenseMatrix& p) {
  DenseMatrix s(sv.size(), sv.size());
  for (std::size_t x = 0; x < sv.size(); ++x)
    for (std::size_t y = 0; y < sv.size(); ++y)
      s(x, y) = std::sqrt(sv.probabilities[x] / sv.probabilities[y]) * p(x, y);
  return s;
}

// 1 - (second-largest eigenvalue) of the one-step kernel, by dense
// diagonalization of the symmetrized kernel.
inline GapValue exact_gap(std::size_t n, std::size_t m, double q) {
  if (n < 2) throw InvalidInput("exact_gap: n must be >= 2");
  if (binomial(n, m) > static_cast<double>(kGapCapacity))
    throw CapacityError("exact_gap: C(" + std::to_string(n) + "," + std::to_string(m) +
                        ") exceeds capacity " + std::to_string(kGapCapacity));
  const StationaryVector sv = exact_stationary(n, m, q);
  if (sv.size() < 2) throw InvalidInput("exact_gap: state space has a single configuration");
  const DenseMatrix p = asep_transition_matrix(sv);
  const Spectrum spec = jacobi_eigenvalues(SymMatrix::symmetrized(symmetrized_kernel(sv, p)));
  return {1.0 - spec.values[spec.size() - 2], GapProvenance::kExactDiagonalization};
}

// 1 - cos(pi/n) / Delta with Delta = (q + 1/q)/2.
inline GapValue asep_gap_formula(std::size_t n, double q) {
  if (n < 2) throw InvalidInput("asep_gap_formula: n must be >= 2");
  if (!(q > 0.0 && q <= 1.0)) throw InvalidInput("asep_gap_formula: q must lie in (0, 1]");
  const double delta = 0.5 * (q + 1.0 / q);
  return {1.0 - std::cos(std::numbers::pi / static_cast<double>(n)) / delta,
          GapProvenance::kFormula};
}

// Small-bias expansion c^2 / (2 n^{2 alpha}) for q = 1 - c/n^alpha.
inline GapValue asep_gap_asymptotic(std::size_t n, double c, double alpha) {
  (void)AsepParams::from_scaling(n, c, alpha);
  return {c * c / (2.0 * std::pow(static_cast<double>(n), 2.0 * alpha)), GapProvenance::kFormula};
}

// ---------------------------------------------------------------------------
// Blocking measures

struct BlockingParams {
  double a = 1.0;
  double q = 1.0;

  void validate() const {
    if (!(a > 0.0)) throw InvalidInput("BlockingParams: a must be positive");
    if (!(q > 0.0 && q <= 1.0)) throw InvalidInput("BlockingParams: q must lie in (0, 1]");
  }

  // P(X_k = 1) = a q^k / (1 + a q^k), sites k = 1..n.
  [[nodiscard]] double site_prob(std::size_t k) const noexcept {
    const double t = a * std::pow(q, static_cast<double>(k));
    if (std::isinf(t)) return 1.0;
    return t / (1.0 + t);
  }

  [[nodiscard]] std::vector<double> site_probs(std::size_t n) const {
    validate();
    std::vector<double> p(n);
    for (std::size_t k = 1; k <= n; ++k) p[k - 1] = site_prob(k);
    return p;
  }
};

inline AsepConfig blocking_sample(const BlockingParams& bp, std::size_t n, RandomSource& rng) {
  const auto p = bp.site_probs(n);
  AsepConfig c;
  c.bits.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.bits[i] = rng.uniform() < p[i] ? 1 : 0;
  return c;
}

struct BlockingVariance {
  double exact = 0.0;       // sum_i p_i (1 - p_i)
  double site_one_bound = 0.0;  // n p_1 (1 - p_1)
};

inline BlockingVariance blocking_variance(const BlockingParams& bp, std::size_t n) {
  const auto p = bp.site_probs(n);
  BlockingVariance v;
  for (double pi : p) v.exact += pi * (1.0 - pi);
  if (n > 0) v.site_one_bound = static_cast<double>(n) * p[0] * (1.0 - p[0]);
  return v;
}

// Product measure with independent bits conditioned on exactly m ones.
// z(i, t) = P(sum_{j >= i} X_j = t) is tabulated once; each row is rescaled
// by its maximum, which leaves every sampling ratio unchanged.
class ConditionedProductSampler {
 public:
  ConditionedProductSampler(std::vector<double> probs, std::size_t m)
      : p_(std::move(probs)), m_(m) {
    const std::size_t n = p_.size();
    if (m_ > n) throw InvalidInput("conditioned sampler: m > n");
    for (double v : p_)
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("conditioned sampler: bad site probability");
    z_.assign((n + 1) * (m_ + 1), 0.0);
    log_scale_.assign(n + 1, 0.0);
    at(n, 0) = 1.0;
    for (std::size_t i = n; i-- > 0;) {
      double top = 0.0;
      for (std::size_t t = 0; t <= m_; ++t) {
        double v = (1.0 - p_[i]) * at(i + 1, t);
        if (t > 0) v += p_[i] * at(i + 1, t - 1);
        at(i, t) = v;
        top = std::max(top, v);
      }
      if (top > 0.0)
        for (std::size_t t = 0; t <= m_; ++t) at(i, t) /= top;
      log_scale_[i] = log_scale_[i + 1] + (top > 0.0 ? std::log(top) : 0.0);
    }
    if (!(at(0, m_) > 0.0))
      throw InvalidInput("conditioned sampler: conditioning event has probability zero");
  }

  [[nodiscard]] std::size_t size() const noexcept { return p_.size(); }
  [[nodiscard]] std::size_t particles() const noexcept { return m_; }

  // P(X_i = 1 | ones remaining = t on sites i..n-1)
  [[nodiscard]] double conditional_one(std::size_t i, std::size_t t) const noexcept {
    if (t == 0) return 0.0;
    const double one = p_[i] * at(i + 1, t - 1);
    const double zero = (1.0 - p_[i]) * at(i + 1, t);
    return one / (one + zero);
  }

  AsepConfig sample(RandomSource& rng) const {
    AsepConfig c;
    c.bits.resize(p_.size());
    std::size_t remaining = m_;
    for (std::size_t i = 0; i < p_.size(); ++i) {
      const bool one = remaining > 0 && rng.uniform() < conditional_one(i, remaining);
      c.bits[i] = one ? 1 : 0;
      if (one) --remaining;
    }
    return c;
  }

  // Exact conditional probability of a configuration.
  [[nodiscard]] double probability(const AsepConfig& c) const {
    if (c.size() != p_.size() || c.particle_count() != m_) return 0.0;
    double logp = 0.0;
    for (std::size_t i = 0; i < p_.size(); ++i) {
      const double pi = c.bits[i] ? p_[i] : 1.0 - p_[i];
      if (pi == 0.0) return 0.0;
      logp += std::log(pi);
    }
    return std::exp(logp - std::log(at(0, m_)) - log_scale_[0]);
  }

 private:
  double& at(std::size_t i, std::size_t t) noexcept { return z_[i * (m_ + 1) + t]; }
  [[nodiscard]] double at(std::size_t i, std::size_t t) const noexcept {
    return z_[i * (m_ + 1) + t];
  }

  std::vector<double> p_;
  std::size_t m_;
  std::vector<double> z_;
  std::vector<double> log_scale_;
};

inline AsepConfig conditioned_blocking_sample(const BlockingParams& bp, std::size_t n,
                                              std::size_t m, RandomSource& rng) {
  return ConditionedProductSampler(bp.site_probs(n), m).sample(rng);
}

// E[X_1 + ... + X_k | X_1 + ... + X_n = m] for independent bits, by a
// forward prefix distribution and a backward suffix distribution.
inline double conditioned_prefix_mean(std::span<const double> probs, std::size_t m,
                                      std::size_t k) {
  const std::size_t n = probs.size();
  if (k > n || m > n) throw InvalidInput("conditioned_prefix_mean: index out of range");
  auto convolve = [](std::vector<double>& dist, double p) {
    dist.push_back(0.0);
    for (std::size_t t = dist.size() - 1; t > 0; --t)
      dist[t] = dist[t] * (1.0 - p) + dist[t - 1] * p;
    dist[0] *= 1.0 - p;
    const double top = *std::max_element(dist.begin(), dist.end());
    if (top > 0.0)
      for (double& v : dist) v /= top;
  };
  std::vector<double> prefix{1.0};
  for (std::size_t i = 0; i < k; ++i) convolve(prefix, probs[i]);
  std::vector<double> suffix{1.0};
  for (std::size_t i = k; i < n; ++i) convolve(suffix, probs[i]);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < prefix.size() && t <= m; ++t) {
    const std::size_t rest = m - t;
    if (rest >= suffix.size()) continue;
    const double w = prefix[t] * suffix[rest];
    num += static_cast<double>(t) * w;
    den += w;
  }
  if (!(den > 0.0)) throw InvalidInput("conditioned_prefix_mean: conditioning event is null");
  return num / den;
}

// Midpoint height expectation under the blocking measure conditioned on n/2
// ones, with bit 1 = step DOWN: E H_{n/2} = n/2 - 2 E[S_{n/2}].
inline double conditioned_midpoint_expectation_down(const BlockingParams& bp, std::size_t n) {
  if (n < 2 || n % 2 != 0) throw InvalidInput("conditioned_midpoint_expectation: n must be even");
  const auto p = bp.site_probs(n);
  const double s = conditioned_prefix_mean(p, n / 2, n / 2);
  return static_cast<double>(n / 2) - 2.0 * s;
}

// Bounds on E H_k under the unconditioned blocking measure. Convention here
// is bit 1 = step DOWN (opposite to the rest of this header):
//   -k (2 a q / (a q + 1) - 1) <= E H_k <= -k (2 a q^k / (a q^k + 1) - 1)
inline std::pair<double, double> midpoint_expectation_bounds(std::size_t k, double a, double q) {
  if (k < 1) throw InvalidInput("midpoint_expectation_bounds: k must be >= 1");
  const BlockingParams bp{a, q};
  bp.validate();
  const double kd = static_cast<double>(k);
  const double lower = -kd * (2.0 * bp.site_prob(1) - 1.0);
  const double upper = -kd * (2.0 * bp.site_prob(k) - 1.0);
  return {lower, upper};
}

struct QThreshold {
  double qmin = 0.0;
  double c = 0.0;
};

// qmin = (3/5)^{20/n}; c = -20 ln(3/5).
inline QThreshold q_threshold(std::size_t n) {
  if (n < 1) throw InvalidInput("q_threshold: n must be >= 1");
  return {std::pow(0.6, 20.0 / static_cast<double>(n)), -20.0 * std::log(0.6)};
}

// ---------------------------------------------------------------------------
// Stationary sampling

// The reversible law of the chain with m particles is the product measure
// with site odds r^k (r = (2-q)/q) conditioned on m particles. In blocking
// form that is parameter q_b = q/(2-q) with the interface at the center,
// a = q_b^{-(n+1)/2}, read with site order mirrored.
class AsepStationarySampler {
 public:
  AsepStationarySampler(std::size_t n, std::size_t m, double q)
      : sampler_(mirrored_probs(n, q), m) {}

  [[nodiscard]] static BlockingParams blocking_params(std::size_t n, double q) {
    const double qb = q / (2.0 - q);
    return {std::pow(qb, -0.5 * static_cast<double>(n + 1)), qb};
  }

  AsepConfig sample(RandomSource& rng) const {
    AsepConfig c = sampler_.sample(rng);
    std::reverse(c.bits.begin(), c.bits.end());
    return c;
  }

  [[nodiscard]] double probability(AsepConfig c) const {
    std::reverse(c.bits.begin(), c.bits.end());
    return sampler_.probability(c);
  }

 private:
  static std::vector<double> mirrored_probs(std::size_t n, double q) {
    if (!(q > 0.0 && q <= 1.0)) throw InvalidInput("AsepStationarySampler: q must lie in (0, 1]");
    return blocking_params(n, q).site_probs(n);
  }

  ConditionedProductSampler sampler_;
};

}  // namespace cmlab
