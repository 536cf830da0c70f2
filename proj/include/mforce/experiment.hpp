#pragma once

// Configuration-driven sweeps: JSON config in, CSV rows plus a JSON run
// manifest out. Rows are produced in a fixed grid order
// (h, alpha, epsilon, repeat, beta) so equal seeds give identical files.

#include "mforce/exact_oracle.hpp"
#include "mforce/observables.hpp"
#include "mforce/spin_hamiltonian.hpp"
#include "mforce/typicality.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#ifndef MFORCE_GIT_DESCRIBE
#define MFORCE_GIT_DESCRIBE "unknown"
#endif

namespace mforce {

inline constexpr int kCsvSchemaVersion = 1;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OracleMode { none, dense, dense_if_feasible, solvable };

inline std::string_view to_string(OracleMode m) {
  switch (m) {
    case OracleMode::none: return "none";
    case OracleMode::dense: return "dense";
    case OracleMode::dense_if_feasible: return "dense_if_feasible";
    case OracleMode::solvable: return "solvable";
  }
  return "?";
}

/// Physical model before sweep axes are applied.
struct SystemConfig {
  Topology topology = Topology::chain;
  int n_sites = 0;
  int n_system = 2;
  double spin = 0.5;
  double coupling = 1.0;
  double rung_coupling = 1.0;
  /// J_y / J_x and J_z / J_x for the chain-like topologies.
  double jy_ratio = 1.0;
  double jz_ratio = 0.0;
  double field = 0.0;
  double alpha = std::numeric_limits<double>::infinity();
  double epsilon = 1.0;
  std::vector<int> system_sites;
  RMatrix jx, jy, jz;  // explicit topology only
};

struct VerifySettings {
  std::vector<double> betas;
  double rho_tolerance = 0.02;
  double h_tolerance = 0.05;
};

struct ExperimentConfig {
  std::string name = "experiment";
  SystemConfig system;
  std::vector<double> betas;
  std::optional<std::vector<double>> h_grid;
  std::optional<std::vector<double>> alpha_grid;
  std::optional<std::vector<double>> epsilon_grid;
  SamplerConfig sampler;
  OracleMode oracle = OracleMode::none;
  int repeats = 1;
  std::string output_dir = "out";
  std::string csv_name;
  std::string manifest_name;
  VerifySettings verify;
  nlohmann::json source;

  std::string csv_file() const { return csv_name.empty() ? name + ".csv" : csv_name; }
  std::string manifest_file() const { return manifest_name.empty() ? name + "_manifest.json" : manifest_name; }
};

namespace detail {

inline double parse_real(const nlohmann::json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity" || s == "Infinity") return std::numeric_limits<double>::infinity();
  }
  throw ConfigError(what + ": expected a number or \"inf\"");
}

inline std::vector<double> parse_grid(const nlohmann::json& j, const std::string& what) {
  std::vector<double> out;
  if (j.is_array()) {
    for (const auto& x : j) out.push_back(parse_real(x, what));
  } else if (j.is_object() && j.contains("values")) {
    for (const auto& x : j.at("values")) out.push_back(parse_real(x, what));
  } else if (j.is_object() && (j.contains("log_range") || j.contains("linear_range"))) {
    const bool log = j.contains("log_range");
    const auto& r = log ? j.at("log_range") : j.at("linear_range");
    const double lo = r.at("min").get<double>();
    const double hi = r.at("max").get<double>();
    const int n = r.at("points").get<int>();
    if (n < 1) throw ConfigError(what + ": points must be >= 1");
    if (log && !(lo > 0.0 && hi > 0.0)) throw ConfigError(what + ": log range needs positive bounds");
    for (int i = 0; i < n; ++i) {
      const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
      out.push_back(log ? std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo))) : lo + t * (hi - lo));
    }
  } else {
    throw ConfigError(what + ": expected an array, {values}, {log_range} or {linear_range}");
  }
  if (out.empty()) throw ConfigError(what + ": grid is empty");
  return out;
}

inline RMatrix parse_table(const nlohmann::json& j, int n, const std::string& what) {
  RMatrix t = RMatrix::Zero(n, n);
  if (!j.is_array() || static_cast<int>(j.size()) != n) throw ConfigError(what + ": expected an N x N array");
  for (int i = 0; i < n; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_array() || static_cast<int>(j[static_cast<std::size_t>(i)].size()) != n)
      throw ConfigError(what + ": expected an N x N array");
    for (int k = 0; k < n; ++k) t(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
  }
  return t;
}

inline ShiftMode parse_shift(const nlohmann::json& s, double& value) {
  if (s.is_number()) {
    value = s.get<double>();
    return ShiftMode::explicit_value;
  }
  const auto name = s.get<std::string>();
  if (name == "none") return ShiftMode::none;
  if (name == "auto") return ShiftMode::automatic;
  throw ConfigError("sampler.shift: expected \"none\", \"auto\" or a number");
}

inline OracleMode parse_oracle(const std::string& s) {
  if (s == "none") return OracleMode::none;
  if (s == "dense") return OracleMode::dense;
  if (s == "dense_if_feasible") return OracleMode::dense_if_feasible;
  if (s == "solvable") return OracleMode::solvable;
  throw ConfigError("oracle: unknown mode " + s);
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.source = j;
  try {
    cfg.name = j.value("name", cfg.name);
    const auto& s = j.at("system");
    SystemConfig& sys = cfg.system;
    sys.topology = topology_from_string(s.value("topology", std::string("chain")));
    sys.n_sites = s.at("n_sites").get<int>();
    sys.n_system = s.value("n_system", sys.n_system);
    sys.spin = s.value("spin", sys.spin);
    sys.coupling = s.value("coupling", sys.coupling);
    sys.rung_coupling = s.value("rung_coupling", sys.coupling);
    sys.jy_ratio = s.value("jy_ratio", sys.jy_ratio);
    sys.jz_ratio = s.value("jz_ratio", sys.jz_ratio);
    sys.field = s.value("field", sys.field);
    if (s.contains("alpha")) sys.alpha = detail::parse_real(s.at("alpha"), "system.alpha");
    sys.epsilon = s.value("epsilon", sys.epsilon);
    if (s.contains("system_sites")) sys.system_sites = s.at("system_sites").get<std::vector<int>>();
    if (sys.topology == Topology::explicit_table) {
      sys.jx = detail::parse_table(s.at("jx"), sys.n_sites, "system.jx");
      sys.jy = s.contains("jy") ? detail::parse_table(s.at("jy"), sys.n_sites, "system.jy") : RMatrix(sys.jx);
      sys.jz = s.contains("jz") ? detail::parse_table(s.at("jz"), sys.n_sites, "system.jz")
                                : RMatrix(RMatrix::Zero(sys.n_sites, sys.n_sites));
    }

    cfg.betas = detail::parse_grid(j.at("beta_grid"), "beta_grid");
    for (double b : cfg.betas)
      if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("beta_grid: values must be finite and > 0");
    if (j.contains("h_grid")) cfg.h_grid = detail::parse_grid(j.at("h_grid"), "h_grid");
    if (j.contains("alpha_grid")) cfg.alpha_grid = detail::parse_grid(j.at("alpha_grid"), "alpha_grid");
    if (j.contains("epsilon_grid")) cfg.epsilon_grid = detail::parse_grid(j.at("epsilon_grid"), "epsilon_grid");

    if (j.contains("sampler")) {
      const auto& sm = j.at("sampler");
      cfg.sampler.n_v = sm.value("n_v", cfg.sampler.n_v);
      cfg.sampler.k = sm.value("k", cfg.sampler.k);
      cfg.sampler.seed = sm.value("seed", cfg.sampler.seed);
      cfg.sampler.reorthogonalize = sm.value("reorthogonalize", cfg.sampler.reorthogonalize);
      cfg.sampler.threads = sm.value("threads", cfg.sampler.threads);
      if (sm.contains("shift")) cfg.sampler.shift = detail::parse_shift(sm.at("shift"), cfg.sampler.explicit_shift);
      if (sm.value("distribution", std::string("gaussian")) != "gaussian")
        throw ConfigError("sampler.distribution: sweeps use the gaussian ensemble");
    }
    cfg.oracle = detail::parse_oracle(j.value("oracle", std::string("none")));
    cfg.repeats = j.value("repeats", 1);
    if (j.contains("output")) {
      const auto& o = j.at("output");
      cfg.output_dir = o.value("dir", cfg.output_dir);
      cfg.csv_name = o.value("csv", std::string());
      cfg.manifest_name = o.value("manifest", std::string());
    }
    if (j.contains("verify")) {
      const auto& v = j.at("verify");
      if (v.contains("betas")) cfg.verify.betas = detail::parse_grid(v.at("betas"), "verify.betas");
      cfg.verify.rho_tolerance = v.value("rho_tolerance", cfg.verify.rho_tolerance);
      cfg.verify.h_tolerance = v.value("h_tolerance", cfg.verify.h_tolerance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (cfg.repeats < 1) throw ConfigError("repeats must be >= 1");
  cfg.sampler.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_experiment_config(j);
}

/// One point of the sweep's Cartesian product.
struct GridPoint {
  double h = 0.0;
  double alpha = 0.0;
  double epsilon = 1.0;
};

inline std::vector<GridPoint> grid_points(const ExperimentConfig& cfg) {
  const std::vector<double> hs = cfg.h_grid.value_or(std::vector<double>{cfg.system.field});
  const std::vector<double> as = cfg.alpha_grid.value_or(std::vector<double>{cfg.system.alpha});
  const std::vector<double> es = cfg.epsilon_grid.value_or(std::vector<double>{cfg.system.epsilon});
  std::vector<GridPoint> out;
  for (double h : hs)
    for (double a : as)
      for (double e : es) out.push_back({h, a, e});
  return out;
}

inline SpinSystemSpec make_spec(const SystemConfig& sys, const GridPoint& p) {
  SpinSystemSpec spec;
  switch (sys.topology) {
    case Topology::chain:
    case Topology::power_law_chain:
      spec = make_power_law_chain(sys.n_sites, sys.n_system, sys.coupling, p.alpha, p.h, sys.spin);
      spec.jy = sys.jy_ratio * spec.jx;
      spec.jz = sys.jz_ratio * spec.jx;
      break;
    case Topology::ladder:
      spec = make_ladder(sys.n_sites, sys.n_system, sys.coupling, sys.rung_coupling, p.h, sys.spin);
      spec.jy = sys.jy_ratio * spec.jx;
      spec.jz = sys.jz_ratio * spec.jx;
      break;
    case Topology::explicit_table:
      spec.n_sites = sys.n_sites;
      spec.n_system = sys.n_system;
      spec.spin = sys.spin;
      spec.topology = Topology::explicit_table;
      spec.field = p.h;
      spec.jx = sys.jx;
      spec.jy = sys.jy;
      spec.jz = sys.jz;
      break;
  }
  spec.epsilon = p.epsilon;
  spec.system_sites = sys.system_sites;
  spec.validate();
  return spec;
}

/// True when the closed-form chain applies: spin-1/2 nearest-neighbour XX
/// chain, system = first two sites, full coupling.
inline bool solvable_chain_applies(const SpinSystemSpec& spec) {
  if (spec.spin != 0.5 || spec.n_system != 2 || spec.epsilon != 1.0 || spec.n_sites < 3) return false;
  if (!spec.system_sites.empty() && spec.system_sites != std::vector<int>{0, 1}) return false;
  const RMatrix ref = make_chain(spec.n_sites, 2, 1.0, 0.0).jx;
  const double j = spec.jx(0, 1);
  return j != 0.0 && spec.jx.isApprox(j * ref) && spec.jy.isApprox(spec.jx) && spec.jz.isZero();
}

struct SweepRow {
  double beta = 0.0;
  GridPoint point;
  int repeat = 0;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  ThermoRecord estimate;
  std::optional<ThermoRecord> oracle;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t system_dim = 0;
  bool oracle_skipped = false;
  int failed_rows = 0;
  double wall_seconds = 0.0;
};

/// Seed of repeat r, derived from the master seed.
inline std::uint64_t repeat_seed(std::uint64_t master, int repeat) {
  return stream_seed(master, StreamTag::repeat, static_cast<std::uint64_t>(repeat));
}

namespace detail {

inline ThermoRecord oracle_record(const DenseReduced& d, const HermitianSmall& hs) {
  return thermo_record(d.beta, d.rho, d.h_star, d.log_z_star, hs);
}

inline ThermoRecord solvable_record(const SolvableChainResult& sc, double beta, const HermitianSmall& hs) {
  ThermoRecord r;
  r.beta = beta;
  r.rho_eigenvalues = sc.rho_sorted();
  r.h_eigenvalues = sc.h_sorted();
  RVector p(4);
  for (int i = 0; i < 4; ++i) p(i) = sc.p[static_cast<std::size_t>(i)];
  r.entropy = entropy_from_probabilities(p);
  r.energy_system = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    if (sc.p[i] > 0.0) r.energy_system += sc.p[i] * sc.h[i];
  const HermitianSmall rho_s = bare_density(hs, beta);
  r.energy_bare = (hs * rho_s).trace().real();
  r.deviation = r.energy_system - r.energy_bare;
  r.log_z_star = sc.log_z_star;
  r.min_h_gap = min_gap(r.h_eigenvalues);
  return r;
}

}  // namespace detail

/// Evaluates the sweep in memory. Throws on infeasible dimensions and on an
/// oracle mode that cannot be honoured.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const std::vector<double>& betas, int repeats,
                             std::ostream* log = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  SweepResult out;
  for (const GridPoint& p : grid_points(cfg)) {
    const SpinSystemSpec spec = make_spec(cfg.system, p);
    out.system_dim = spec.system_dim();
    const HermitianSmall hs = dense_hamiltonian(spec, Role::system);

    std::unique_ptr<DenseOracle> dense;
    bool use_solvable = false;
    switch (cfg.oracle) {
      case OracleMode::none: break;
      case OracleMode::dense:
        if (spec.total_dim() > kDenseLimit) throw DimensionError("oracle dense: total dimension above dense limit");
        dense = std::make_unique<DenseOracle>(spec);
        break;
      case OracleMode::dense_if_feasible:
        if (spec.total_dim() <= kDenseLimit) {
          dense = std::make_unique<DenseOracle>(spec);
        } else {
          out.oracle_skipped = true;
        }
        break;
      case OracleMode::solvable:
        if (!solvable_chain_applies(spec))
          throw ConfigError("oracle solvable: model is not a spin-1/2 nearest-neighbour XX chain with N_s = 2, epsilon = 1");
        use_solvable = true;
        break;
    }

    for (int r = 0; r < repeats; ++r) {
      SamplerConfig sc = cfg.sampler;
      sc.seed = repeat_seed(cfg.sampler.seed, r);
      if (log)
        *log << "h=" << p.h << " alpha=" << p.alpha << " epsilon=" << p.epsilon << " repeat " << r + 1 << "/" << repeats
             << "\n";
      const SampleSet set = sample_spin_system(spec, sc);
      for (double beta : betas) {
        SweepRow row;
        row.beta = beta;
        row.point = p;
        row.repeat = r;
        row.seed = sc.seed;
        try {
          row.estimate = thermo_record(set.evaluate(beta), hs);
        } catch (const NumericalError& e) {
          row.ok = false;
          row.error = e.what();
          ++out.failed_rows;
        }
        if (dense) row.oracle = detail::oracle_record(dense->at(beta), hs);
        if (use_solvable)
          row.oracle = detail::solvable_record(solvable_chain(spec.n_sites, spec.jx(0, 1), p.h, beta), beta, hs);
        out.rows.push_back(std::move(row));
      }
    }
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline SweepResult run_sweep(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  return run_sweep(cfg, cfg.betas, cfg.repeats, log);
}

// ---------------------------------------------------------------------------
// Output.

inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> csv_header(std::size_t system_dim) {
  std::vector<std::string> h = {"beta", "h", "alpha", "epsilon", "repeat"};
  auto block = [&](const std::string& prefix) {
    for (std::size_t i = 1; i <= system_dim; ++i) h.push_back(prefix + "rho_eig_" + std::to_string(i));
    for (std::size_t i = 1; i <= system_dim; ++i) h.push_back(prefix + "H_eig_" + std::to_string(i));
    for (const char* c : {"entropy", "energy_system", "energy_bare", "deviation", "Z_star"}) h.push_back(prefix + c);
  };
  block("");
  block("oracle_");
  for (const char* c : {"n_v", "k", "seed"}) h.push_back(c);
  return h;
}

inline void write_csv(std::ostream& os, const SweepResult& res, const SamplerConfig& sampler) {
  const auto header = csv_header(res.system_dim);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\r\n";
  const auto n = static_cast<Eigen::Index>(res.system_dim);
  auto record = [&](const ThermoRecord* r) {
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << (r ? format_real(r->rho_eigenvalues(i)) : "");
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << (r ? format_real(r->h_eigenvalues(i)) : "");
    if (r) {
      os << ',' << format_real(r->entropy) << ',' << format_real(r->energy_system) << ',' << format_real(r->energy_bare)
         << ',' << format_real(r->deviation) << ',' << format_real(std::exp(r->log_z_star));
    } else {
      os << ",,,,,";
    }
  };
  for (const SweepRow& row : res.rows) {
    os << format_real(row.beta) << ',' << format_real(row.point.h) << ',' << format_real(row.point.alpha) << ','
       << format_real(row.point.epsilon) << ',' << row.repeat;
    if (row.ok) {
      record(&row.estimate);
    } else {
      for (Eigen::Index i = 0; i < 2 * n + 5; ++i) os << ",nan";
    }
    record(row.oracle ? &*row.oracle : nullptr);
    os << ',' << sampler.n_v << ',' << sampler.k << ',' << row.seed << "\r\n";
  }
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

inline nlohmann::json make_manifest(const ExperimentConfig& cfg, const SweepResult& res) {
  nlohmann::json m;
  m["schema_version"] = kCsvSchemaVersion;
  m["name"] = cfg.name;
  m["seed"] = cfg.sampler.seed;
  m["git_describe"] = MFORCE_GIT_DESCRIBE;
  m["wall_time_seconds"] = res.wall_seconds;
  m["finished_at"] = utc_timestamp();
  m["rows"] = res.rows.size();
  m["failed_rows"] = res.failed_rows;
  m["oracle_mode"] = std::string(to_string(cfg.oracle));
  m["oracle_skipped"] = res.oracle_skipped;
  m["csv"] = cfg.csv_file();
  m["columns"] = csv_header(res.system_dim);
  m["threads"] = cfg.sampler.threads;
  m["config"] = cfg.source;
  return m;
}

struct RunOptions {
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

/// Output directory: explicit option, then MFORCE_OUT_DIR, then the config.
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const RunOptions& opts) {
  if (opts.out_dir) return *opts.out_dir;
  if (const char* env = std::getenv("MFORCE_OUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

inline SweepResult run_experiment(ExperimentConfig cfg, const RunOptions& opts, std::ostream* log = nullptr) {
  if (opts.threads) cfg.sampler.threads = *opts.threads;
  if (opts.seed) cfg.sampler.seed = *opts.seed;
  cfg.sampler.validate();
  const auto dir = resolve_output_dir(cfg, opts);
  std::filesystem::create_directories(dir);
  SweepResult res = run_sweep(cfg, log);
  {
    std::ofstream csv(dir / cfg.csv_file(), std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + (dir / cfg.csv_file()).string());
    write_csv(csv, res, cfg.sampler);
  }
  std::ofstream man(dir / cfg.manifest_file());
  if (!man) throw std::runtime_error("cannot write " + (dir / cfg.manifest_file()).string());
  man << make_manifest(cfg, res).dump(2) << "\n";
  return res;
}

// ---------------------------------------------------------------------------
// Verification against the oracle on a reduced grid.

struct VerifyReport {
  bool passed = true;
  double max_rho_error = 0.0;
  double max_h_error = 0.0;
  std::vector<std::string> lines;
};

inline VerifyReport verify_experiment(ExperimentConfig cfg) {
  if (cfg.oracle == OracleMode::none || cfg.oracle == OracleMode::dense_if_feasible) cfg.oracle = OracleMode::dense;
  const std::vector<double> betas = cfg.verify.betas.empty() ? cfg.betas : cfg.verify.betas;
  const SweepResult res = run_sweep(cfg, betas, 1);
  VerifyReport rep;
  for (const SweepRow& row : res.rows) {
    std::ostringstream line;
    line << "beta=" << row.beta << " h=" << row.point.h << " alpha=" << row.point.alpha
         << " epsilon=" << row.point.epsilon;
    if (!row.ok) {
      rep.passed = false;
      line << " FAIL estimator error: " << row.error;
      rep.lines.push_back(line.str());
      continue;
    }
    const double drho = (row.estimate.rho_eigenvalues - row.oracle->rho_eigenvalues).cwiseAbs().maxCoeff();
    const double dh = (row.estimate.h_eigenvalues - row.oracle->h_eigenvalues).cwiseAbs().maxCoeff();
    rep.max_rho_error = std::max(rep.max_rho_error, drho);
    rep.max_h_error = std::max(rep.max_h_error, dh);
    const bool ok = drho <= cfg.verify.rho_tolerance && dh <= cfg.verify.h_tolerance;
    rep.passed = rep.passed && ok;
    line << " max|d rho|=" << drho << " (tol " << cfg.verify.rho_tolerance << ") max|d H|=" << dh << " (tol "
         << cfg.verify.h_tolerance << ") " << (ok ? "PASS" : "FAIL");
    rep.lines.push_back(line.str());
  }
  return rep;
}

}  // namespace mforce
