#pragma once

// Experiment engine: declarative specs, replica-parallel Monte Carlo with
// per-replica seed streams, tail-curve estimation with Wilson intervals, and
// CSV / JSON reporting.
//
// Every replica draws from its own RandomSource seeded by
// (masterSeed, replicaIndex, stream), and results land in a slot indexed by
// replica, so outputs do not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cmlab/asep.hpp"
#include "cmlab/cmbounds.hpp"
#include "cmlab/errors.hpp"
#include "cmlab/kacwalk.hpp"
#include "cmlab/matcore.hpp"
#include "cmlab/random.hpp"
#include "cmlab/thermo.hpp"

namespace cmlab {

enum class ExperimentKind {
  kKacEsd,
  kThermoEsd,
  kAsepMidpoint,
  kAsepLis,
  kAsepGap,
  kBoundsAudit,
  kBlockingAudit,
};

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kKacEsd: return "kac-esd";
    case ExperimentKind::kThermoEsd: return "thermo-esd";
    case ExperimentKind::kAsepMidpoint: return "asep-midpoint";
    case ExperimentKind::kAsepLis: return "asep-lis";
    case ExperimentKind::kAsepGap: return "asep-gap";
    case ExperimentKind::kBoundsAudit: return "bounds-audit";
    case ExperimentKind::kBlockingAudit: return "blocking-audit";
  }
  return "unknown";
}

inline ExperimentKind parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::kKacEsd, ExperimentKind::kThermoEsd, ExperimentKind::kAsepMidpoint,
                 ExperimentKind::kAsepLis, ExperimentKind::kAsepGap, ExperimentKind::kBoundsAudit,
                 ExperimentKind::kBlockingAudit})
    if (to_string(k) == s) return k;
  throw ConfigError("kind: unknown experiment kind '" + s + "'");
}

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kKacEsd;
  std::optional<std::size_t> n;
  std::optional<std::size_t> k;
  std::optional<std::size_t> m;
  std::optional<double> q;
  std::optional<double> c;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> mu;
  std::optional<double> a;
  std::size_t replicas = 0;
  std::size_t pilot_replicas = 0;
  std::optional<std::uint64_t> burn_in;
  std::vector<double> r_grid;
  std::uint64_t master_seed = 20240101;
  std::string output_path;
  std::string seed_matrix = "goe";  // goe | identity | zero
  std::size_t inner_samples = 0;    // bounds-audit only
};

// ---------------------------------------------------------------------------
// Defaults and validation

namespace detail {

inline std::vector<double> arithmetic_grid(double start, double step, int count) {
  std::vector<double> g(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = start + step * i;
  return g;
}

}  // namespace detail

// Fills every unset field with the per-kind default.
inline ExperimentSpec with_defaults(ExperimentSpec s) {
  using K = ExperimentKind;
  switch (s.kind) {
    case K::kKacEsd:
    case K::kThermoEsd: {
      const bool kac = s.kind == K::kKacEsd;
      if (!s.n) s.n = kac ? 60 : 40;
      if (!s.k) s.k = *s.n / 2;
      if (!kac) {
        if (!s.beta) s.beta = 1.0;
        if (!s.mu) s.mu = 1.0;
      }
      if (s.replicas == 0) s.replicas = 2000;
      if (s.pilot_replicas == 0) s.pilot_replicas = 2000;
      if (!s.burn_in) s.burn_in = 0;
      if (s.r_grid.empty()) s.r_grid = detail::arithmetic_grid(0.0, 0.05, 11);
      break;
    }
    case K::kAsepMidpoint:
    case K::kAsepLis: {
      if (!s.n) s.n = 200;
      if (!s.c) s.c = 1.0;
      if (!s.alpha) s.alpha = 0.5;
      if (!s.m) s.m = *s.n / 2;
      if (s.replicas == 0) s.replicas = 1000;
      if (!s.burn_in) s.burn_in = static_cast<std::uint64_t>(*s.n) * *s.n;
      if (s.r_grid.empty())
        s.r_grid = s.kind == K::kAsepMidpoint ? detail::arithmetic_grid(0.0, 1.0, 21)
                                              : detail::arithmetic_grid(0.0, 2.0, 21);
      break;
    }
    case K::kAsepGap: {
      if (!s.n) s.n = 8;
      if (!s.m) s.m = *s.n / 2;
      if (!s.q) s.q = 0.5;
      break;
    }
    case K::kBoundsAudit: {
      if (!s.n) s.n = 40;
      if (!s.k) s.k = *s.n / 2;
      if (!s.c) s.c = 1.0;
      if (!s.alpha) s.alpha = 0.5;
      if (!s.beta) s.beta = 1.0;
      if (!s.mu) s.mu = 1.0;
      if (s.replicas == 0) s.replicas = 40;
      if (s.inner_samples == 0) s.inner_samples = 4000;
      break;
    }
    case K::kBlockingAudit: {
      if (!s.n) s.n = 40;
      const double cth = q_threshold(*s.n).c;
      if (!s.q) s.q = 1.0 - cth / static_cast<double>(*s.n);
      if (!s.a) s.a = std::pow(*s.q, -9.0 * static_cast<double>(*s.n) / 20.0);
      if (s.replicas == 0) s.replicas = 100000;
      break;
    }
  }
  if (s.output_path.empty()) s.output_path = to_string(s.kind) + ".csv";
  return s;
}

inline void validate(const ExperimentSpec& s) {
  using K = ExperimentKind;
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(s.n.has_value() && *s.n >= 2, "n: must be >= 2");
  const std::size_t n = *s.n;
  require(std::is_sorted(s.r_grid.begin(), s.r_grid.end()), "rGrid: must be ascending");
  for (double r : s.r_grid) require(std::isfinite(r) && r >= 0.0, "rGrid: entries must be >= 0");
  switch (s.kind) {
    case K::kKacEsd:
    case K::kThermoEsd:
      require(s.k.has_value() && *s.k >= 1 && *s.k <= n, "k: must satisfy 1 <= k <= n");
      require(s.replicas >= 1, "replicas: must be >= 1");
      require(s.pilot_replicas >= 100, "pilotReplicas: must be >= 100");
      require(!s.r_grid.empty(), "rGrid: must be nonempty");
      require(s.seed_matrix == "goe" || s.seed_matrix == "identity" || s.seed_matrix == "zero",
              "seedMatrix: must be one of goe, identity, zero");
      if (s.kind == K::kThermoEsd) {
        require(s.beta && *s.beta > 0.0, "beta: must be positive");
        require(s.mu && *s.mu > 0.0, "mu: must be positive");
      }
      break;
    case K::kAsepMidpoint:
    case K::kAsepLis:
      require(n % 2 == 0, "n: must be even for ASEP walk experiments");
      require(n <= 100000, "n: exceeds desk-scale limit");
      require(s.c && *s.c > 0.0, "c: must be positive");
      require(s.alpha && *s.alpha > 0.0 && *s.alpha < 1.0, "alpha: must lie in (0, 1)");
      require(s.m && *s.m <= n, "m: must satisfy 0 <= m <= n");
      require(s.replicas >= 1, "replicas: must be >= 1");
      require(!s.r_grid.empty(), "rGrid: must be nonempty");
      {
        const double q = 1.0 - *s.c / std::pow(static_cast<double>(n), *s.alpha);
        require(q > 0.0 && q < 1.0, "c: q = 1 - c/n^alpha must lie in (0, 1)");
      }
      break;
    case K::kAsepGap:
      require(s.m && *s.m <= n, "m: must satisfy 0 <= m <= n");
      require(s.q && *s.q > 0.0 && *s.q <= 1.0, "q: must lie in (0, 1]");
      break;
    case K::kBoundsAudit:
      require(n % 2 == 0, "n: must be even for the ASEP audits");
      require(s.k.has_value() && *s.k >= 1 && *s.k <= n, "k: must satisfy 1 <= k <= n");
      require(s.c && *s.c > 0.0, "c: must be positive");
      require(s.alpha && *s.alpha > 0.0 && *s.alpha < 1.0, "alpha: must lie in (0, 1)");
      require(s.replicas >= 1, "replicas: must be >= 1");
      require(s.inner_samples >= 2, "innerSamples: must be >= 2");
      break;
    case K::kBlockingAudit:
      require(n % 2 == 0, "n: must be even");
      require(s.q && *s.q > 0.0 && *s.q <= 1.0, "q: must lie in (0, 1]");
      require(s.a && *s.a > 0.0, "a: must be positive");
      require(s.replicas >= 2, "replicas: must be >= 2");
      break;
  }
}

// ---------------------------------------------------------------------------
// JSON spec I/O

inline ExperimentSpec parse_spec(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("spec: top level must be a JSON object");
  static const std::set<std::string> known = {
      "kind",     "n",          "k",        "m",      "q",          "c",
      "alpha",    "beta",       "mu",       "a",      "replicas",   "pilotReplicas",
      "burnIn",   "rGrid",      "masterSeed", "outputPath", "seedMatrix", "innerSamples"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError(key + ": unknown field");
  if (!j.contains("kind")) throw ConfigError("kind: required field missing");

  ExperimentSpec s;
  auto field = [&]<class T>(const char* name, T& dst) {
    if (!j.contains(name)) return;
    try {
      dst = j.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string(name) + ": wrong type");
    }
  };
  auto count_field = [&](const char* name, auto& dst) {
    if (!j.contains(name)) return;
    const auto& v = j.at(name);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(std::string(name) + ": must be a nonnegative integer");
    dst = v.get<std::uint64_t>();
  };
  auto real_field = [&](const char* name, std::optional<double>& dst) {
    if (!j.contains(name)) return;
    if (!j.at(name).is_number()) throw ConfigError(std::string(name) + ": must be a number");
    dst = j.at(name).get<double>();
  };

  std::string kind;
  field("kind", kind);
  s.kind = parse_kind(kind);
  std::optional<std::uint64_t> tmp;
  auto opt_count = [&](const char* name, std::optional<std::size_t>& dst) {
    tmp.reset();
    count_field(name, tmp);
    if (tmp) dst = static_cast<std::size_t>(*tmp);
  };
  opt_count("n", s.n);
  opt_count("k", s.k);
  opt_count("m", s.m);
  real_field("q", s.q);
  real_field("c", s.c);
  real_field("alpha", s.alpha);
  real_field("beta", s.beta);
  real_field("mu", s.mu);
  real_field("a", s.a);
  std::uint64_t u = 0;
  if (j.contains("replicas")) {
    count_field("replicas", u);
    s.replicas = static_cast<std::size_t>(u);
  }
  if (j.contains("pilotReplicas")) {
    count_field("pilotReplicas", u);
    s.pilot_replicas = static_cast<std::size_t>(u);
  }
  if (j.contains("innerSamples")) {
    count_field("innerSamples", u);
    s.inner_samples = static_cast<std::size_t>(u);
  }
  if (j.contains("burnIn")) {
    count_field("burnIn", u);
    s.burn_in = u;
  }
  if (j.contains("masterSeed")) count_field("masterSeed", s.master_seed);
  field("rGrid", s.r_grid);
  field("outputPath", s.output_path);
  field("seedMatrix", s.seed_matrix);
  return s;
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("spec: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("spec: JSON parse error: ") + e.what());
  }
  return parse_spec(j);
}

inline nlohmann::json spec_to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  j["kind"] = to_string(s.kind);
  auto put = [&](const char* name, const auto& opt) {
    if (opt) j[name] = *opt;
  };
  put("n", s.n);
  put("k", s.k);
  put("m", s.m);
  put("q", s.q);
  put("c", s.c);
  put("alpha", s.alpha);
  put("beta", s.beta);
  put("mu", s.mu);
  put("a", s.a);
  put("burnIn", s.burn_in);
  j["replicas"] = s.replicas;
  j["pilotReplicas"] = s.pilot_replicas;
  j["innerSamples"] = s.inner_samples;
  j["rGrid"] = s.r_grid;
  j["masterSeed"] = s.master_seed;
  j["outputPath"] = s.output_path;
  j["seedMatrix"] = s.seed_matrix;
  return j;
}

// ---------------------------------------------------------------------------
// Replica-parallel map

inline std::size_t default_workers() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// out[i] = fn(i) for i in [0, count), spread over `workers` threads.
template <class T, class Fn>
std::vector<T> parallel_replicas(std::size_t count, std::size_t workers, Fn&& fn) {
  std::vector<T> out(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return out;
}

// ---------------------------------------------------------------------------
// Stationary samplers for the compression experiments

inline SymMatrix seed_matrix(const ExperimentSpec& s) {
  const std::size_t n = *s.n;
  if (s.seed_matrix == "identity") return SymMatrix::identity(n);
  if (s.seed_matrix == "zero") return SymMatrix(n);
  RandomSource rng(ReplicaSeed{s.master_seed, 0, Stream::kSeedMatrix});
  return goe_matrix(n, rng);
}

// Leading k x k block of the Kac chain state at stationarity: Haar start,
// then `burn_in` further Kac steps.
inline SymMatrix kac_stationary_block(const SymMatrix& g, std::size_t k, std::uint64_t burn_in,
                                      RandomSource& rng) {
  const OrthogonalMatrix o = haar_so_n(g.order(), rng);
  if (burn_in == 0) return compressed_conjugate(o, g, k);
  KacChainState state(conjugate(o, g), 0);
  for (std::uint64_t t = 0; t < burn_in; ++t) kac_step(state, rng);
  return top_left_block(state.matrix(), k);
}

inline SymMatrix thermo_stationary_block(const SymMatrix& g, const ThermostatParams& p,
                                         std::size_t k, std::uint64_t burn_in, RandomSource& rng) {
  GaussMatrixState state = sample_invariant(p, rng);
  for (std::uint64_t t = 0; t < burn_in; ++t) coupled_step(state, p, rng);
  return gaussian_compression(g, state, k);
}

inline ThermostatParams thermostat_params(const ExperimentSpec& s) {
  return ThermostatParams{*s.n, s.beta.value_or(1.0), s.mu.value_or(1.0)};
}

inline SymMatrix stationary_block(const ExperimentSpec& s, const SymMatrix& g,
                                  RandomSource& rng) {
  if (s.kind == ExperimentKind::kThermoEsd)
    return thermo_stationary_block(g, thermostat_params(s), *s.k, s.burn_in.value_or(0), rng);
  return kac_stationary_block(g, *s.k, s.burn_in.value_or(0), rng);
}

// Expected spectral distribution estimated from an independent pilot
// ensemble: the average of the pilot ESDs is the ESD of the pooled
// eigenvalues.
inline EsdStepFunction estimate_expected_esd(const ExperimentSpec& spec, const SymMatrix& g,
                                             std::size_t workers = default_workers()) {
  if (spec.pilot_replicas < 100) throw InvalidInput("estimate_expected_esd: pilotReplicas < 100");
  auto spectra = parallel_replicas<std::vector<double>>(
      spec.pilot_replicas, workers, [&](std::size_t i) {
        RandomSource rng(ReplicaSeed{spec.master_seed, i, Stream::kPilot});
        return jacobi_eigenvalues(stationary_block(spec, g, rng)).values;
      });
  std::vector<double> pooled;
  pooled.reserve(spec.pilot_replicas * *spec.k);
  for (const auto& v : spectra) pooled.insert(pooled.end(), v.begin(), v.end());
  return EsdStepFunction(std::move(pooled));
}

// ---------------------------------------------------------------------------
// Tail curves

inline constexpr double kWilsonZ95 = 1.959963984540054;

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};

inline WilsonInterval wilson_interval(std::size_t successes, std::size_t trials,
                                      double z = kWilsonZ95) {
  if (trials == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return {std::clamp(std::min(center - half, p), 0.0, 1.0),
          std::clamp(std::max(center + half, p), 0.0, 1.0)};
}

enum class TailMode {
  kAboveOffset,   // value >= offset + r
  kTwoSidedMean,  // |value - mean| >= r
};

struct TailPoint {
  double r = 0.0;
  double empirical_p = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  double bound = 0.0;  // raw formula value, may exceed 1
  std::size_t exceed_count = 0;
  std::size_t replicas = 0;

  // Empirical violation of the inequality: Wilson-low above the clamped bound.
  [[nodiscard]] bool violates() const noexcept { return ci_low > std::min(1.0, bound); }
};

struct TailCurveEstimate {
  double offset = 0.0;
  TailMode mode = TailMode::kAboveOffset;
  std::vector<TailPoint> points;

  [[nodiscard]] bool consistent() const noexcept {
    return std::none_of(points.begin(), points.end(), [](const TailPoint& p) { return p.violates(); });
  }
};

inline TailCurveEstimate estimate_tail_curve(std::span<const double> statistics,
                                             std::span<const double> r_grid, double offset,
                                             const std::function<double(double)>& bound,
                                             TailMode mode = TailMode::kAboveOffset) {
  if (statistics.empty()) throw InvalidInput("estimate_tail_curve: no statistics");
  double mean = 0.0;
  for (double v : statistics) mean += v;
  mean /= static_cast<double>(statistics.size());

  TailCurveEstimate out;
  out.offset = offset;
  out.mode = mode;
  for (double r : r_grid) {
    std::size_t hits = 0;
    for (double v : statistics) {
      const bool hit = mode == TailMode::kAboveOffset ? v >= offset + r : std::abs(v - mean) >= r;
      hits += hit ? 1 : 0;
    }
    TailPoint p;
    p.r = r;
    p.replicas = statistics.size();
    p.exceed_count = hits;
    p.empirical_p = static_cast<double>(hits) / static_cast<double>(statistics.size());
    const auto ci = wilson_interval(hits, statistics.size());
    p.ci_low = ci.low;
    p.ci_high = ci.high;
    p.bound = bound ? bound(r) : 1.0;
    out.points.push_back(p);
  }
  return out;
}

inline TailCurveEstimate estimate_tail_curve(std::span<const double> statistics,
                                             std::span<const double> r_grid, double offset,
                                             const TailBoundCurve& curve,
                                             TailMode mode = TailMode::kAboveOffset) {
  return estimate_tail_curve(statistics, r_grid, offset,
                             std::function<double(double)>([curve](double r) { return curve.evaluate(r); }),
                             mode);
}

// ---------------------------------------------------------------------------
// Statistic collection per experiment kind

// ||F_A - F_hat||_inf for each main replica.
inline std::vector<double> collect_esd_statistics(const ExperimentSpec& spec,
                                                  const EsdStepFunction& reference,
                                                  const SymMatrix& g, std::size_t workers) {
  return parallel_replicas<double>(spec.replicas, workers, [&](std::size_t i) {
    RandomSource rng(ReplicaSeed{spec.master_seed, i, Stream::kMain});
    const auto esd = build_esd(jacobi_eigenvalues(stationary_block(spec, g, rng)));
    return kolmogorov_distance(esd, reference);
  });
}

struct AsepWalkSample {
  int midpoint = 0;
  std::size_t lis = 0;
};

inline std::vector<AsepWalkSample> collect_asep_samples(const ExperimentSpec& spec,
                                                        std::size_t workers) {
  const auto params = AsepParams::from_scaling(*spec.n, *spec.c, *spec.alpha);
  const AsepStationarySampler sampler(*spec.n, *spec.m, params.q);
  const std::uint64_t burn = spec.burn_in.value_or(0);
  return parallel_replicas<AsepWalkSample>(spec.replicas, workers, [&](std::size_t i) {
    RandomSource rng(ReplicaSeed{spec.master_seed, i, Stream::kMain});
    AsepConfig cfg = sampler.sample(rng);
    for (std::uint64_t t = 0; t < burn; ++t) asep_step(cfg, params, rng);
    return AsepWalkSample{midpoint_height(cfg), lis_length(cfg)};
  });
}

// ---------------------------------------------------------------------------
// Reporting

inline std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline const char* kCsvHeader =
    "experiment,n,k,q,c,alpha,beta,mu,r,offset,empirical_p,ci_low,ci_high,bound,exceed_count,"
    "replicas,seed";

struct CsvRow {
  std::string experiment;
  std::optional<std::size_t> n, k;
  std::optional<double> q, c, alpha, beta, mu, r, offset, empirical_p, ci_low, ci_high, bound;
  std::optional<std::size_t> exceed_count, replicas;
  std::optional<std::uint64_t> seed;

  [[nodiscard]] std::string str() const {
    std::string line = experiment;
    auto num = [&](const std::optional<double>& v) {
      line += ',';
      if (v) line += format_number(*v);
    };
    auto cnt = [&](const auto& v) {
      line += ',';
      if (v) line += std::to_string(*v);
    };
    cnt(n);
    cnt(k);
    num(q);
    num(c);
    num(alpha);
    num(beta);
    num(mu);
    num(r);
    num(offset);
    num(empirical_p);
    num(ci_low);
    num(ci_high);
    num(bound);
    cnt(exceed_count);
    cnt(replicas);
    cnt(seed);
    return line;
  }
};

inline std::string render_csv(const std::vector<CsvRow>& rows) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += r.str();
    out += '\n';
  }
  return out;
}

struct Check {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::vector<CsvRow> rows;
  std::vector<Check> checks;
  nlohmann::json extras = nlohmann::json::object();
  double wall_seconds = 0.0;

  [[nodiscard]] bool passed() const noexcept {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }

  [[nodiscard]] std::string csv() const { return render_csv(rows); }

  [[nodiscard]] nlohmann::json summary() const {
    nlohmann::json j;
    j["spec"] = spec_to_json(spec);
    j["wall_time_seconds"] = wall_seconds;
    j["passed"] = passed();
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks)
      j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    j["results"] = extras;
    return j;
  }
};

namespace detail {

inline CsvRow base_row(const ExperimentSpec& s, const std::string& name) {
  CsvRow row;
  row.experiment = name;
  row.n = s.n;
  row.seed = s.master_seed;
  switch (s.kind) {
    case ExperimentKind::kKacEsd:
      row.k = s.k;
      break;
    case ExperimentKind::kThermoEsd:
      row.k = s.k;
      row.beta = s.beta;
      row.mu = s.mu;
      break;
    case ExperimentKind::kAsepMidpoint:
    case ExperimentKind::kAsepLis:
      row.c = s.c;
      row.alpha = s.alpha;
      row.q = 1.0 - *s.c / std::pow(static_cast<double>(*s.n), *s.alpha);
      break;
    default:
      break;
  }
  return row;
}

inline void append_tail_rows(ExperimentReport& rep, const TailCurveEstimate& tail) {
  for (const auto& p : tail.points) {
    CsvRow row = base_row(rep.spec, to_string(rep.spec.kind));
    row.r = p.r;
    row.offset = tail.offset;
    row.empirical_p = p.empirical_p;
    row.ci_low = p.ci_low;
    row.ci_high = p.ci_high;
    row.bound = p.bound;
    row.exceed_count = p.exceed_count;
    row.replicas = p.replicas;
    rep.rows.push_back(row);
  }
  std::size_t violations = 0;
  std::string worst;
  for (const auto& p : tail.points)
    if (p.violates()) {
      ++violations;
      if (worst.empty())
        worst = "r=" + format_number(p.r) + " ci_low=" + format_number(p.ci_low) +
                " bound=" + format_number(std::min(1.0, p.bound));
    }
  rep.checks.push_back({"bound-consistency", violations == 0,
                        violations == 0 ? "Wilson-low <= min(1, bound) at every r"
                                        : std::to_string(violations) + " violation(s), first " + worst});
}

inline nlohmann::json moments_json(std::span<const double> v) {
  RunningMoments m;
  for (double x : v) m.add(x);
  return {{"mean", m.mean}, {"sd", std::sqrt(m.variance())}, {"count", m.count}};
}

inline void run_compression(ExperimentReport& rep, std::size_t workers) {
  const auto& s = rep.spec;
  const SymMatrix g = seed_matrix(s);
  const EsdStepFunction reference = estimate_expected_esd(s, g, workers);
  const auto stats = collect_esd_statistics(s, reference, g, workers);
  const double offset = 1.0 / std::sqrt(static_cast<double>(*s.k));
  const TailBoundCurve curve = s.kind == ExperimentKind::kKacEsd
                                   ? kac_esd_curve(*s.k)
                                   : thermostat_esd_curve(*s.k, *s.mu);
  append_tail_rows(rep, estimate_tail_curve(stats, s.r_grid, offset, curve));
  rep.extras["statistic"] = moments_json(stats);
  rep.extras["statistic"]["max"] = *std::max_element(stats.begin(), stats.end());
}

inline void run_asep_walk(ExperimentReport& rep, std::size_t workers) {
  const auto& s = rep.spec;
  const auto samples = collect_asep_samples(s, workers);
  std::vector<double> mids, lis;
  for (const auto& w : samples) {
    mids.push_back(w.midpoint);
    lis.push_back(static_cast<double>(w.lis));
  }
  const bool midpoint = s.kind == ExperimentKind::kAsepMidpoint;
  const auto& stats = midpoint ? mids : lis;
  const TailBoundCurve curve = midpoint ? asep_midpoint_curve(*s.n, *s.c, *s.alpha)
                                        : asep_lis_curve(*s.n, *s.c, *s.alpha);
  append_tail_rows(rep, estimate_tail_curve(stats, s.r_grid, 0.0, curve, TailMode::kTwoSidedMean));
  rep.extras["midpoint"] = moments_json(mids);
  rep.extras["lis"] = moments_json(lis);
  std::size_t lower_bound_violations = 0;
  for (const auto& w : samples)
    if (static_cast<double>(w.lis) < w.midpoint) ++lower_bound_violations;
  rep.checks.push_back({"lis-above-midpoint", lower_bound_violations == 0,
                        std::to_string(lower_bound_violations) + " violation(s)"});
  if (!midpoint) {
    const double sd = rep.extras["lis"]["sd"].get<double>();
    const double scale = 3.0 * std::pow(static_cast<double>(*s.n), *s.alpha);
    rep.extras["lis_sd_over_n_alpha"] = sd / std::pow(static_cast<double>(*s.n), *s.alpha);
    rep.checks.push_back({"lis-fluctuation-scale", sd <= scale,
                          "sd=" + format_number(sd) + " limit 3 n^alpha=" + format_number(scale)});
  }
}

inline void run_gap(ExperimentReport& rep) {
  const auto& s = rep.spec;
  const StationaryVector sv = exact_stationary(*s.n, *s.m, *s.q);
  const DenseMatrix p = asep_transition_matrix(sv);
  const double residual = detailed_balance_residual(sv, p);
  const GapValue exact = exact_gap(*s.n, *s.m, *s.q);
  const GapValue formula = asep_gap_formula(*s.n, *s.q);
  CsvRow row = base_row(s, to_string(s.kind));
  row.q = s.q;
  row.empirical_p = exact.lambda1;
  row.bound = formula.lambda1;
  rep.rows.push_back(row);
  rep.extras["exact_gap"] = exact.lambda1;
  rep.extras["formula_gap"] = formula.lambda1;
  rep.extras["ratio"] = exact.lambda1 / formula.lambda1;
  rep.extras["detailed_balance_residual"] = residual;
  rep.extras["states"] = sv.size();
  rep.checks.push_back({"detailed-balance", residual <= 1e-12,
                        "residual=" + format_number(residual)});
}

inline void run_bounds_audit(ExperimentReport& rep, std::size_t workers) {
  const auto& s = rep.spec;
  const std::size_t n = *s.n, k = *s.k;
  const std::size_t states = s.replicas, inner = s.inner_samples;

  struct Audit {
    std::string name;
    TripleNormBound estimate;
    TripleNormBound analytic;
  };
  // Each audit gets its own seed stream slot so they are independent of
  // each other and of the worker count.
  auto audits = parallel_replicas<Audit>(4, workers, [&](std::size_t which) -> Audit {
    RandomSource rng(ReplicaSeed{s.master_seed, which, Stream::kAudit});
    switch (which) {
      case 0: {
        RandomSource grng(ReplicaSeed{s.master_seed, 0, Stream::kSeedMatrix});
        const SymMatrix g = goe_matrix(n, grng);
        const double x0 = jacobi_eigenvalues(g).values[n / 2];
        auto sample = [&](RandomSource& r) { return conjugate(haar_so_n(n, r), g); };
        auto step = [](const SymMatrix& h, RandomSource& r) {
          return apply_givens_conjugation(h, sample_rotation(h.order(), r));
        };
        auto f = [&](const SymMatrix& h) {
          return build_esd(jacobi_eigenvalues(top_left_block(h, k)))(x0);
        };
        return {"kac-esd", triple_norm_estimate(sample, step, f, states, inner, rng),
                kac_triple_norm_bound(n, k)};
      }
      case 1: {
        RandomSource grng(ReplicaSeed{s.master_seed, 0, Stream::kSeedMatrix});
        const SymMatrix g = goe_matrix(n, grng);
        const ThermostatParams tp{n, *s.beta, *s.mu};
        auto sample = [&](RandomSource& r) { return sample_invariant(tp, r); };
        auto step = [&](const GaussMatrixState& st, RandomSource& r) {
          GaussMatrixState next = st;
          coupled_step(next, tp, r);
          return next;
        };
        // F_A(0): the compressed spectrum is symmetric about zero in law.
        auto f = [&](const GaussMatrixState& st) {
          return build_esd(jacobi_eigenvalues(gaussian_compression(g, st, k)))(0.0);
        };
        return {"thermo-esd", triple_norm_estimate(sample, step, f, states, inner, rng),
                thermostat_triple_norm_bound(n, k)};
      }
      default: {
        const auto params = AsepParams::from_scaling(n, *s.c, *s.alpha);
        const AsepStationarySampler sampler(n, n / 2, params.q);
        auto sample = [&](RandomSource& r) { return sampler.sample(r); };
        auto step = [&](const AsepConfig& c, RandomSource& r) {
          AsepConfig next = c;
          asep_step(next, params, r);
          return next;
        };
        if (which == 2) {
          auto f = [](const AsepConfig& c) { return static_cast<double>(midpoint_height(c)); };
          return {"asep-midpoint", triple_norm_estimate(sample, step, f, states, inner, rng),
                  {1.0 / (2.0 * static_cast<double>(n - 1)), NormProvenance::kAnalytic}};
        }
        auto f = [](const AsepConfig& c) { return static_cast<double>(lis_length(c)); };
        return {"asep-lis", triple_norm_estimate(sample, step, f, states, inner, rng),
                {0.5, NormProvenance::kAnalytic}};
      }
    }
  });

  for (const auto& a : audits) {
    CsvRow row;
    row.experiment = "bounds-audit:" + a.name;
    row.n = n;
    if (a.name == "kac-esd" || a.name == "thermo-esd") row.k = k;
    if (a.name == "thermo-esd") {
      row.beta = s.beta;
      row.mu = s.mu;
    }
    if (a.name.starts_with("asep")) {
      row.c = s.c;
      row.alpha = s.alpha;
      row.q = 1.0 - *s.c / std::pow(static_cast<double>(n), *s.alpha);
    }
    row.empirical_p = a.estimate.delta;
    row.ci_low = a.estimate.delta - 3.0 * a.estimate.standard_error;
    row.ci_high = a.estimate.delta + 3.0 * a.estimate.standard_error;
    row.bound = a.analytic.delta;
    row.replicas = states;
    row.seed = s.master_seed;
    rep.rows.push_back(row);
    const bool ok = a.estimate.delta <= a.analytic.delta + 3.0 * a.estimate.standard_error;
    rep.checks.push_back({"triple-norm:" + a.name, ok,
                          "estimate=" + format_number(a.estimate.delta) +
                              " se=" + format_number(a.estimate.standard_error) +
                              " analytic=" + format_number(a.analytic.delta)});
    rep.extras["triple_norm"][a.name] = {{"estimate", a.estimate.delta},
                                         {"se", a.estimate.standard_error},
                                         {"analytic", a.analytic.delta}};
  }
  const MgfProduct mgf = mgf_product_constant(30);
  rep.extras["mgf_product_constant"] = {{"value", mgf.value}, {"remainder_bound", mgf.remainder_bound}};
  rep.checks.push_back({"mgf-product-below-3", mgf.value + mgf.remainder_bound < 3.0,
                        "value=" + format_number(mgf.value)});
}

inline void run_blocking_audit(ExperimentReport& rep, std::size_t workers) {
  const auto& s = rep.spec;
  const std::size_t n = *s.n;
  const BlockingParams bp{*s.a, *s.q};
  const auto probs = bp.site_probs(n);
  double mean_exact = 0.0;
  for (double p : probs) mean_exact += p;
  const BlockingVariance var = blocking_variance(bp, n);

  const auto counts = parallel_replicas<double>(s.replicas, workers, [&](std::size_t i) {
    RandomSource rng(ReplicaSeed{s.master_seed, i, Stream::kMain});
    return static_cast<double>(blocking_sample(bp, n, rng).particle_count());
  });
  RunningMoments mom;
  for (double c : counts) mom.add(c);
  double m4 = 0.0;
  for (double c : counts) m4 += std::pow(c - mom.mean, 4);
  m4 /= static_cast<double>(counts.size());
  const double var_se =
      std::sqrt(std::max(0.0, m4 - mom.variance() * mom.variance()) / static_cast<double>(counts.size()));

  const double midpoint = conditioned_midpoint_expectation_down(bp, n);
  const auto [lower, upper] = midpoint_expectation_bounds(n / 2, bp.a, bp.q);

  auto row = [&](const std::string& what, double value, double se, double bound) {
    CsvRow r;
    r.experiment = "blocking-audit:" + what;
    r.n = n;
    r.q = bp.q;
    r.empirical_p = value;
    r.ci_low = value - 3.0 * se;
    r.ci_high = value + 3.0 * se;
    r.bound = bound;
    r.replicas = counts.size();
    r.seed = s.master_seed;
    rep.rows.push_back(r);
  };
  row("mean-count", mom.mean, mom.standard_error(), mean_exact);
  row("var-count", mom.variance(), var_se, var.exact);
  row("midpoint-over-n", midpoint / static_cast<double>(n), 0.0, 0.0);

  rep.checks.push_back({"mean-count-mc", std::abs(mom.mean - mean_exact) <= 3.0 * mom.standard_error(),
                        "mc=" + format_number(mom.mean) + " exact=" + format_number(mean_exact)});
  rep.checks.push_back({"var-count-mc", std::abs(mom.variance() - var.exact) <= 3.0 * var_se,
                        "mc=" + format_number(mom.variance()) + " exact=" + format_number(var.exact)});
  rep.checks.push_back({"var-count-below-n", var.exact <= static_cast<double>(n),
                        "exact=" + format_number(var.exact)});
  rep.extras["a"] = bp.a;
  rep.extras["q"] = bp.q;
  rep.extras["variance_exact"] = var.exact;
  rep.extras["variance_site_one_bound"] = var.site_one_bound;
  rep.extras["conditioned_midpoint_down"] = midpoint;
  rep.extras["unconditioned_midpoint_bounds"] = {lower, upper};
}

}  // namespace detail

// Runs one experiment in memory; no files written.
inline ExperimentReport execute(ExperimentSpec spec, std::size_t workers = default_workers()) {
  spec = with_defaults(std::move(spec));
  validate(spec);
  ExperimentReport rep;
  rep.spec = spec;
  const auto t0 = std::chrono::steady_clock::now();
  switch (spec.kind) {
    case ExperimentKind::kKacEsd:
    case ExperimentKind::kThermoEsd:
      detail::run_compression(rep, workers);
      break;
    case ExperimentKind::kAsepMidpoint:
    case ExperimentKind::kAsepLis:
      detail::run_asep_walk(rep, workers);
      break;
    case ExperimentKind::kAsepGap:
      detail::run_gap(rep);
      break;
    case ExperimentKind::kBoundsAudit:
      detail::run_bounds_audit(rep, workers);
      break;
    case ExperimentKind::kBlockingAudit:
      detail::run_blocking_audit(rep, workers);
      break;
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Summary JSON goes next to the CSV with a .json extension.
inline std::filesystem::path summary_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}

inline ExperimentReport run_experiment(const ExperimentSpec& spec,
                                       std::size_t workers = default_workers()) {
  ExperimentReport rep = execute(spec, workers);
  const std::filesystem::path csv_path = rep.spec.output_path;
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw ConfigError("outputPath: cannot write " + csv_path.string());
    out << rep.csv();
  }
  std::ofstream js(summary_path(csv_path), std::ios::binary);
  js << rep.summary().dump(2) << '\n';
  return rep;
}

}  // namespace cmlab
