// cmlab: command-line driver for the concentration-bound experiments.
//
//   cmlab run <spec.json> [--seed S] [--workers W] [--replicas R] [--out PATH]
//   cmlab gap-audit --n N --q Q [--m M]
//   cmlab bounds --kind KIND [params] --r GRID
//   cmlab selftest
//
// Exit codes: 0 pass, 1 bound violation, 2 config error, 3 numeric/capacity error.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmlab/cmlab.hpp"

namespace {

enum ExitCode { kPass = 0, kViolation = 1, kConfig = 2, kNumeric = 3 };

// "0,0.5,1" or "start:step:stop"
std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    double start = 0, step = 0, stop = 0;
    char c1 = 0, c2 = 0;
    std::istringstream in(text);
    in.imbue(std::locale::classic());
    if (!(in >> start >> c1 >> step >> c2 >> stop) || c1 != ':' || c2 != ':' || !(step > 0))
      throw cmlab::ConfigError("r: expected start:step:stop");
    const int count = static_cast<int>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (int i = 0; i < count; ++i) out.push_back(start + step * i);
    return out;
  }
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw cmlab::ConfigError("r: bad grid entry '" + tok + "'");
    }
  }
  if (out.empty()) throw cmlab::ConfigError("r: empty grid");
  return out;
}

int run_command(const std::string& spec_path, std::optional<std::uint64_t> seed,
                std::optional<std::size_t> workers, std::optional<std::size_t> replicas,
                std::optional<std::string> out) {
  cmlab::ExperimentSpec spec = cmlab::load_spec(spec_path);
  if (seed) spec.master_seed = *seed;
  if (replicas) spec.replicas = *replicas;
  if (out) spec.output_path = *out;
  const auto report = cmlab::run_experiment(spec, workers.value_or(cmlab::default_workers()));
  std::cout << cmlab::to_string(report.spec.kind) << ": wrote " << report.spec.output_path
            << " (" << report.rows.size() << " rows, "
            << cmlab::format_number(report.wall_seconds) << " s)\n";
  for (const auto& c : report.checks)
    std::cout << "  [" << (c.passed ? "PASS" : "FAIL") << "] " << c.name << ": " << c.detail
              << '\n';
  return report.passed() ? kPass : kViolation;
}

int gap_audit(std::size_t n, double q, std::optional<std::size_t> m) {
  const std::size_t mm = m.value_or(n / 2);
  const auto sv = cmlab::exact_stationary(n, mm, q);
  const auto p = cmlab::asep_transition_matrix(sv);
  const double residual = cmlab::detailed_balance_residual(sv, p);
  const auto exact = cmlab::exact_gap(n, mm, q);
  const auto formula = cmlab::asep_gap_formula(n, q);
  std::cout << "n=" << n << " m=" << mm << " q=" << cmlab::format_number(q)
            << " states=" << sv.size() << '\n'
            << "exact_gap=" << cmlab::format_number(exact.lambda1) << '\n'
            << "formula_gap=" << cmlab::format_number(formula.lambda1) << '\n'
            << "ratio=" << cmlab::format_number(exact.lambda1 / formula.lambda1) << '\n'
            << "detailed_balance_residual=" << cmlab::format_number(residual) << '\n';
  return residual <= 1e-12 ? kPass : kNumeric;
}

struct BoundArgs {
  std::string kind;
  std::size_t n = 100;
  std::size_t k = 25;
  double mu = 1.0;
  double c = 1.0;
  double alpha = 0.5;
  double lambda = 1.0;
  double delta = 1.0;
  bool one_sided = false;
  std::string grid = "0:1:10";
};

int bounds(const BoundArgs& a) {
  cmlab::TailBoundCurve curve;
  if (a.kind == "kac-esd") curve = cmlab::kac_esd_curve(a.k);
  else if (a.kind == "thermo-esd") curve = cmlab::thermostat_esd_curve(a.k, a.mu);
  else if (a.kind == "asep-midpoint") curve = cmlab::asep_midpoint_curve(a.n, a.c, a.alpha);
  else if (a.kind == "asep-lis") curve = cmlab::asep_lis_curve(a.n, a.c, a.alpha);
  else if (a.kind == "generic")
    curve = cmlab::generic_tail_bound({a.lambda}, {a.delta},
                                      a.one_sided ? cmlab::Sidedness::kOneSided
                                                  : cmlab::Sidedness::kTwoSided);
  else throw cmlab::ConfigError("kind: unknown bound kind '" + a.kind + "'");
  std::cout << "kind,r,bound,clamped\n";
  for (double r : parse_grid(a.grid))
    std::cout << a.kind << ',' << cmlab::format_number(r) << ','
              << cmlab::format_number(curve.evaluate(r)) << ','
              << cmlab::format_number(curve.clamped(r)) << '\n';
  return kPass;
}

int selftest() {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << '\n';
    if (!ok) ++failures;
  };
  auto rel = [](double got, double want) { return std::abs(got - want) <= 1e-12 * std::abs(want); };
  check("kac gap n=4", rel(cmlab::kac_gap_formula(4).lambda1, 0.25));
  check("asep gap formula n=4 q=1", rel(cmlab::asep_gap_formula(4, 1.0).lambda1,
                                        1.0 - std::cos(M_PI / 4)));
  check("thermostat gap n=10 mu=1",
        rel(cmlab::thermostat_gap_formula({10, 1.0, 1.0}).lambda1, 0.05));
  check("kac esd bound k=25 r=4", rel(cmlab::kac_esd_bound(25, 4.0),
                                      60.0 * std::exp(-4.0 * std::sqrt(25.0 / 32.0))));
  const auto mgf = cmlab::mgf_product_constant(30);
  check("mgf product constant < 3", mgf.value + mgf.remainder_bound < 3.0);
  check("asep exact gap n=2", std::abs(cmlab::exact_gap(2, 1, 0.7).lambda1 - 1.0) <= 1e-12);
  const auto spec = cmlab::jacobi_eigenvalues(cmlab::SymMatrix{{2, 1}, {1, 2}});
  check("jacobi 2x2", std::abs(spec.values[0] - 1) < 1e-12 && std::abs(spec.values[1] - 3) < 1e-12);
  return failures == 0 ? kPass : kViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concentration-of-measure laboratory for Kac, thermostat and ASEP chains"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment spec (JSON)");
  std::string spec_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers, replicas;
  std::optional<std::string> out;
  run->add_option("spec", spec_path, "Experiment spec file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override masterSeed");
  run->add_option("--workers", workers, "Worker threads");
  run->add_option("--replicas", replicas, "Override replicas");
  run->add_option("--out", out, "Override outputPath (CSV)");

  auto* gap = app.add_subcommand("gap-audit", "Exact ASEP gap against the closed form");
  std::size_t gap_n = 4;
  double gap_q = 0.5;
  std::optional<std::size_t> gap_m;
  gap->add_option("--n", gap_n, "Sites")->required();
  gap->add_option("--q", gap_q, "Asymmetry q in (0,1]")->required();
  gap->add_option("--m", gap_m, "Particles (default n/2)");

  auto* bnd = app.add_subcommand("bounds", "Evaluate a tail-bound curve on an r grid");
  BoundArgs ba;
  bnd->add_option("--kind", ba.kind, "kac-esd | thermo-esd | asep-midpoint | asep-lis | generic")
      ->required();
  bnd->add_option("--n", ba.n);
  bnd->add_option("--k", ba.k);
  bnd->add_option("--mu", ba.mu);
  bnd->add_option("--c", ba.c);
  bnd->add_option("--alpha", ba.alpha);
  bnd->add_option("--lambda", ba.lambda, "Spectral gap (generic)");
  bnd->add_option("--delta", ba.delta, "Triple-norm bound (generic)");
  bnd->add_flag("--one-sided", ba.one_sided, "Prefactor 3 instead of 6 (generic)");
  bnd->add_option("--r", ba.grid, "Grid: comma list or start:step:stop");

  auto* self = app.add_subcommand("selftest", "Quick formula and oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfig;
  }

  try {
    if (*run) return run_command(spec_path, seed, workers, replicas, out);
    if (*gap) return gap_audit(gap_n, gap_q, gap_m);
    if (*bnd) return bounds(ba);
    if (*self) return selftest();
  } catch (const cmlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const cmlab::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kConfig;
  } catch (const cmlab::CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return kNumeric;
  } catch (const cmlab::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  }
  return kConfig;
}
