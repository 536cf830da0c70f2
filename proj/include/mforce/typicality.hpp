#pragma once

// Block stochastic Lanczos quadrature for partial traces over the bath.
//
// For bath states v_j with E[v v^dagger] = I_b, the block (I_s (x) <v|) A
// (I_s (x) |v>) is an unbiased estimate of tr_b(A). With A = f[H] each block
// is replaced by the block Gauss quadrature corner of f[T_j], where T_j comes
// from block Lanczos on H started at I_s (x) v_j / |v_j|.

#include "mforce/block_krylov.hpp"
#include "mforce/linalg.hpp"
#include "mforce/rng.hpp"
#include "mforce/spin_hamiltonian.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <tuple>
#include <vector>

namespace mforce {

enum class Distribution { gaussian, product_state };

enum class ShiftMode {
  none,
  /// Each side shifted by its own smallest Ritz value; the offset is restored
  /// exactly in the log domain.
  automatic,
  /// The same E0 subtracted on both sides.
  explicit_value,
};

struct SamplerConfig {
  int n_v = 100;
  int k = 30;
  std::uint64_t seed = 0;
  Distribution distribution = Distribution::gaussian;
  ShiftMode shift = ShiftMode::automatic;
  double explicit_shift = 0.0;
  bool reorthogonalize = true;
  int threads = 1;

  void validate() const {
    if (n_v < 1) throw std::invalid_argument("SamplerConfig: n_v must be >= 1");
    if (k < 1) throw std::invalid_argument("SamplerConfig: k must be >= 1");
    if (threads < 1) throw std::invalid_argument("SamplerConfig: threads must be >= 1");
    if (shift == ShiftMode::explicit_value && !std::isfinite(explicit_shift))
      throw std::invalid_argument("SamplerConfig: explicit shift must be finite");
  }
};

/// Gaussian bath state for sample j; a pure function of (seed, j).
inline CVector sample_bath_state(std::uint64_t seed, std::uint64_t j, std::size_t bath_dim) {
  return complex_gaussian(bath_dim, stream_seed(seed, StreamTag::bath_state, j));
}

/// I_s (x) v as a dim_s*dim_b x dim_s block.
inline CMatrix embed_bath_state(const CVector& v, std::size_t system_dim) {
  const auto nb = v.size();
  const auto ns = static_cast<Eigen::Index>(system_dim);
  CMatrix block = CMatrix::Zero(ns * nb, ns);
  for (Eigen::Index m = 0; m < ns; ++m) block.block(m * nb, m, nb, 1) = v;
  return block;
}

namespace detail {

/// Runs body(j) for j in [0, n) on up to `threads` workers; results are
/// written by index so scheduling cannot affect them.
inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n <= 1) {
    for (int j = 0; j < n; ++j) body(j);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int j = next++; j < n; j = next++) {
        try {
          body(j);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline int clamp_steps(int k, std::size_t dim, std::size_t block) {
  return static_cast<int>(std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(k), dim / block)));
}

}  // namespace detail

struct PartialTraceEstimate {
  HermitianSmall value;
  std::vector<HermitianSmall> per_sample;
  int samples = 0;
  double shift = 0.0;
  int breakdowns = 0;

  /// Per-entry standard error of the mean (real and imaginary parts combined).
  RMatrix standard_error() const {
    const auto n = static_cast<double>(per_sample.size());
    RMatrix var = RMatrix::Zero(value.rows(), value.cols());
    for (const auto& s : per_sample) var += (s - value).cwiseAbs2();
    if (n > 1) var /= (n - 1.0);
    return (var / n).cwiseSqrt();
  }
};

/// Averaged block quadrature estimate of tr_b(f[H]) for an operator on the
/// total space with the system occupying the leading digits.
template <LinearOperator Op, typename F>
PartialTraceEstimate estimate_partial_trace(const Op& h, std::size_t system_dim, F&& f, const SamplerConfig& cfg) {
  cfg.validate();
  const std::size_t dim = h.dimension();
  if (system_dim == 0 || dim % system_dim != 0) throw DimensionError("estimate_partial_trace: system dimension does not divide");
  const std::size_t bath_dim = dim / system_dim;
  const int steps = detail::clamp_steps(cfg.k, dim, system_dim);
  LanczosOptions opts;
  opts.reorthogonalize = cfg.reorthogonalize;

  PartialTraceEstimate out;
  out.samples = cfg.n_v;
  out.per_sample.resize(static_cast<std::size_t>(cfg.n_v));
  std::vector<int> broke(static_cast<std::size_t>(cfg.n_v), 0);
  detail::parallel_for(cfg.n_v, cfg.threads, [&](int j) {
    const CVector v = sample_bath_state(cfg.seed, static_cast<std::uint64_t>(j), bath_dim);
    const double norm2 = v.squaredNorm();
    const auto t = block_lanczos(h, embed_bath_state(v / std::sqrt(norm2), system_dim), steps, opts);
    broke[static_cast<std::size_t>(j)] = t.breakdown ? 1 : 0;
    out.per_sample[static_cast<std::size_t>(j)] = norm2 * quadrature_corner(t, f);
  });
  out.value = CMatrix::Zero(static_cast<Eigen::Index>(system_dim), static_cast<Eigen::Index>(system_dim));
  for (const auto& s : out.per_sample) out.value += s;
  out.value /= static_cast<double>(cfg.n_v);
  out.value = hermitian_part(out.value);
  for (int b : broke) out.breakdowns += b;
  return out;
}

/// Eigenvalues of rho* (descending) and H* (ascending) from the averaged
/// numerator block, without a matrix logarithm. rho_i pairs with h_i.
struct TransformedEigenvalues {
  RVector rho;
  RVector h_star;
  /// false where the numerator eigenvalue was not positive (h undefined).
  std::vector<bool> defined;
};

inline TransformedEigenvalues eigenvalues_via_transform(const HermitianSmall& numerator, double bath_trace, double beta,
                                                        double energy_offset = 0.0) {
  if (!(beta > 0.0)) throw std::invalid_argument("eigenvalues_via_transform: beta must be > 0");
  const double tr = trace_real(numerator);
  if (!(tr > 0.0)) throw NumericalError("eigenvalues_via_transform: numerator trace must be positive");
  const RVector asc = hermitian_eigen(numerator).eigenvalues();
  const auto n = asc.size();
  TransformedEigenvalues out;
  out.rho.resize(n);
  out.h_star.resize(n);
  out.defined.assign(static_cast<std::size_t>(n), true);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lam = asc(n - 1 - i);
    out.rho(i) = lam / tr;
    if (lam > 0.0 && bath_trace > 0.0) {
      out.h_star(i) = -std::log(lam / bath_trace) / beta + energy_offset;
    } else {
      out.h_star(i) = std::numeric_limits<double>::quiet_NaN();
      out.defined[static_cast<std::size_t>(i)] = false;
    }
  }
  return out;
}

/// One Monte Carlo sample: spectral data of (T_t)_j and (T_b)_j for the same
/// bath state v_j.
struct SampleRecord {
  std::uint64_t total_stream = 0;
  std::uint64_t bath_stream = 0;
  double norm2 = 0.0;
  SpectralCorner total;
  SpectralCorner bath;
  bool breakdown = false;
};

struct MeanForceEstimate {
  double beta = 0.0;
  /// Averaged shifted numerator (1/n) sum_j |v_j|^2 corner(exp(-beta (T_t - E_t0))).
  HermitianSmall numerator;
  /// Averaged shifted bath quadrature (1/n) sum_j |v_j|^2 <1|exp(-beta (T_b - E_b0))|1>.
  double bath_trace = 0.0;
  double shift_total = 0.0;
  double shift_bath = 0.0;
  HermitianSmall rho;
  HermitianSmall h_star;
  RVector rho_eigenvalues;  // descending
  RVector h_eigenvalues;    // ascending
  double log_z_star = 0.0;
  /// Jackknife standard errors of the sorted eigenvalues, when requested.
  RVector rho_eigenvalue_se;
  RVector h_eigenvalue_se;
};

/// Repairs tiny negative eigenvalues of a unit-trace Hermitian matrix; larger
/// negatives (below -tol) are a sampling failure.
inline HermitianSmall repair_density(const HermitianSmall& rho, double tol = 1e-10) {
  const auto es = hermitian_eigen(rho);
  RVector p = es.eigenvalues();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) < -tol) {
      std::ostringstream msg;
      msg << "reduced density has eigenvalue " << p(i) << " below " << -tol << "; increase n_v";
      throw NumericalError(msg.str());
    }
    p(i) = std::max(p(i), 0.0);
  }
  p /= p.sum();
  const CMatrix& u = es.eigenvectors();
  return hermitian_part(u * p.cast<Complex>().asDiagonal() * u.adjoint());
}

/// Samples shared by every temperature: one block Lanczos run on H_t and one
/// scalar Lanczos run on H_b per bath state.
class SampleSet {
 public:
  template <LinearOperator TotalOp, LinearOperator BathOp>
  SampleSet(const TotalOp& total, const BathOp& bath, const SamplerConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    if (cfg.distribution != Distribution::gaussian)
      throw std::invalid_argument("SampleSet: mean force estimators use the gaussian ensemble");
    bath_dim_ = bath.dimension();
    if (bath_dim_ == 0 || total.dimension() % bath_dim_ != 0)
      throw DimensionError("SampleSet: bath dimension does not divide total dimension");
    system_dim_ = total.dimension() / bath_dim_;
    k_total_ = detail::clamp_steps(cfg.k, total.dimension(), system_dim_);
    k_bath_ = detail::clamp_steps(cfg.k, bath_dim_, 1);
    LanczosOptions opts;
    opts.reorthogonalize = cfg.reorthogonalize;

    samples_.resize(static_cast<std::size_t>(cfg.n_v));
    detail::parallel_for(cfg.n_v, cfg.threads, [&](int j) {
      SampleRecord& rec = samples_[static_cast<std::size_t>(j)];
      rec.total_stream = rec.bath_stream = static_cast<std::uint64_t>(j);
      const CVector v = sample_bath_state(cfg.seed, rec.bath_stream, bath_dim_);
      rec.norm2 = v.squaredNorm();
      const CVector unit = v / std::sqrt(rec.norm2);
      const auto tt = block_lanczos(total, embed_bath_state(unit, system_dim_), k_total_, opts);
      const auto tb = block_lanczos(bath, CMatrix(unit), k_bath_, opts);
      rec.breakdown = tt.breakdown || tb.breakdown;
      rec.total = spectral_corner(tt);
      rec.bath = spectral_corner(tb);
    });

    min_total_ = min_bath_ = std::numeric_limits<double>::infinity();
    for (const auto& s : samples_) {
      min_total_ = std::min(min_total_, s.total.min_node());
      min_bath_ = std::min(min_bath_, s.bath.min_node());
    }
  }

  std::size_t system_dim() const { return system_dim_; }
  std::size_t bath_dim() const { return bath_dim_; }
  int size() const { return static_cast<int>(samples_.size()); }
  int lanczos_steps_total() const { return k_total_; }
  int lanczos_steps_bath() const { return k_bath_; }
  const std::vector<SampleRecord>& samples() const { return samples_; }
  const SamplerConfig& config() const { return cfg_; }
  int breakdowns() const {
    int n = 0;
    for (const auto& s : samples_) n += s.breakdown ? 1 : 0;
    return n;
  }

  std::pair<double, double> shifts() const {
    switch (cfg_.shift) {
      case ShiftMode::none: return {0.0, 0.0};
      case ShiftMode::explicit_value: return {cfg_.explicit_shift, cfg_.explicit_shift};
      case ShiftMode::automatic: return {min_total_, min_bath_};
    }
    return {0.0, 0.0};
  }

  /// Per-sample shifted numerator blocks and bath quadratures at beta.
  void per_sample(double beta, std::vector<HermitianSmall>& numerators, std::vector<double>& baths) const {
    const auto [et, eb] = shifts();
    numerators.resize(samples_.size());
    baths.resize(samples_.size());
    for (std::size_t j = 0; j < samples_.size(); ++j) {
      const auto& s = samples_[j];
      numerators[j] = s.norm2 * s.total.evaluate([&](double x) { return std::exp(-beta * (x - et)); });
      baths[j] = s.norm2 * s.bath.evaluate_scalar([&](double x) { return std::exp(-beta * (x - eb)); });
    }
  }

  /// rho*(beta) and H*(beta) estimates. Throws NumericalError when the ratio
  /// matrix is not positive definite (insufficient sampling).
  MeanForceEstimate evaluate(double beta, bool with_errors = false) const {
    if (!(beta > 0.0)) throw std::invalid_argument("SampleSet::evaluate: beta must be > 0");
    std::vector<HermitianSmall> nums;
    std::vector<double> baths;
    per_sample(beta, nums, baths);
    const auto ns = static_cast<Eigen::Index>(system_dim_);
    CMatrix num_sum = CMatrix::Zero(ns, ns);
    double bath_sum = 0.0;
    for (std::size_t j = 0; j < nums.size(); ++j) {
      num_sum += nums[j];
      bath_sum += baths[j];
    }
    const double n = static_cast<double>(nums.size());

    MeanForceEstimate est;
    est.beta = beta;
    std::tie(est.shift_total, est.shift_bath) = shifts();
    est.numerator = hermitian_part(num_sum / n);
    est.bath_trace = bath_sum / n;
    const double offset = est.shift_total - est.shift_bath;
    const double tr = trace_real(est.numerator);
    if (!(tr > 0.0) || !std::isfinite(tr))
      throw NumericalError("mean force estimate: numerator trace is zero or non-finite (exponential under/overflow)");
    if (!(est.bath_trace > 0.0) || !std::isfinite(est.bath_trace))
      throw NumericalError("mean force estimate: bath quadrature is zero or non-finite");

    const auto es = hermitian_eigen(est.numerator);
    const RVector lam = es.eigenvalues();
    const CMatrix& u = es.eigenvectors();
    if (lam(0) <= 0.0) {
      std::ostringstream msg;
      msg << "mean force estimate: ratio matrix not positive definite (eigenvalue " << lam(0) / est.bath_trace
          << "); increase n_v";
      throw NumericalError(msg.str());
    }
    RVector h(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) h(i) = -std::log(lam(i) / est.bath_trace) / beta + offset;
    est.h_star = hermitian_part(u * h.cast<Complex>().asDiagonal() * u.adjoint());
    est.rho = est.numerator / tr;
    const auto tf = eigenvalues_via_transform(est.numerator, est.bath_trace, beta, offset);
    est.rho_eigenvalues = tf.rho;
    est.h_eigenvalues = tf.h_star;
    est.log_z_star = std::log(tr) - std::log(est.bath_trace) - beta * offset;

    if (with_errors && nums.size() > 1) {
      const auto m = lam.size();
      std::vector<RVector> rho_j, h_j;
      for (std::size_t j = 0; j < nums.size(); ++j) {
        const CMatrix loo = (num_sum - nums[j]) / (n - 1.0);
        const double loo_bath = (bath_sum - baths[j]) / (n - 1.0);
        if (trace_real(loo) <= 0.0 || loo_bath <= 0.0) continue;
        const auto t = eigenvalues_via_transform(loo, loo_bath, beta, offset);
        rho_j.push_back(t.rho);
        h_j.push_back(t.h_star);
      }
      est.rho_eigenvalue_se = jackknife_se(rho_j, m);
      est.h_eigenvalue_se = jackknife_se(h_j, m);
    }
    return est;
  }

  /// max |H*_est - H_s| at a tiny beta; zero in expectation, so a rough
  /// indicator of the sampling error.
  double high_temperature_deviation(const HermitianSmall& system_hamiltonian, double beta = 1e-6) const {
    return (evaluate(beta).h_star - system_hamiltonian).cwiseAbs().maxCoeff();
  }

 private:
  static RVector jackknife_se(const std::vector<RVector>& reps, Eigen::Index m) {
    RVector se = RVector::Constant(m, std::numeric_limits<double>::quiet_NaN());
    const auto n = static_cast<double>(reps.size());
    if (reps.size() < 2) return se;
    RVector mean = RVector::Zero(m);
    for (const auto& r : reps) mean += r;
    mean /= n;
    RVector acc = RVector::Zero(m);
    for (const auto& r : reps) acc += (r - mean).cwiseAbs2();
    return (acc * (n - 1.0) / n).cwiseSqrt();
  }

  SamplerConfig cfg_;
  std::size_t system_dim_ = 0;
  std::size_t bath_dim_ = 0;
  int k_total_ = 0;
  int k_bath_ = 0;
  std::vector<SampleRecord> samples_;
  double min_total_ = 0.0;
  double min_bath_ = 0.0;
};

inline SampleSet sample_spin_system(const SpinSystemSpec& spec, const SamplerConfig& cfg) {
  const auto total = build(spec, Role::total);
  const auto bath = build(spec, Role::bath);
  return SampleSet(total, bath, cfg);
}

inline HermitianSmall mean_force_hamiltonian(const SpinSystemSpec& spec, double beta, const SamplerConfig& cfg) {
  if (!(beta > 0.0)) throw std::invalid_argument("mean_force_hamiltonian: beta must be > 0");
  return sample_spin_system(spec, cfg).evaluate(beta).h_star;
}

inline HermitianSmall reduced_density(const SpinSystemSpec& spec, double beta, const SamplerConfig& cfg) {
  if (!(beta > 0.0)) throw std::invalid_argument("reduced_density: beta must be > 0");
  return repair_density(sample_spin_system(spec, cfg).evaluate(beta).rho);
}

/// Appendix-style consistent estimator: random product states v_s (x) v_b.
/// The scalar <v_s (x) v_b|A|v_s (x) v_b> is simultaneously a sample of
/// <v_s|tr_b A|v_s> and of <v_b|tr_s A|v_b>.
struct ProductStateEstimate {
  std::vector<double> samples;
  double system_view_total = 0.0;
  double bath_view_total = 0.0;
  double mean = 0.0;
  double standard_error = 0.0;
};

template <LinearOperator Op>
ProductStateEstimate product_state_estimate(const Op& a, std::size_t system_dim, const SamplerConfig& cfg) {
  cfg.validate();
  if (cfg.distribution != Distribution::product_state)
    throw std::invalid_argument("product_state_estimate: distribution must be product_state");
  const std::size_t dim = a.dimension();
  if (system_dim == 0 || dim % system_dim != 0) throw DimensionError("product_state_estimate: system dimension does not divide");
  const std::size_t bath_dim = dim / system_dim;
  const auto nb = static_cast<Eigen::Index>(bath_dim);

  ProductStateEstimate out;
  out.samples.resize(static_cast<std::size_t>(cfg.n_v));
  detail::parallel_for(cfg.n_v, cfg.threads, [&](int j) {
    const auto idx = static_cast<std::uint64_t>(j);
    const CVector vs = complex_gaussian(system_dim, stream_seed(cfg.seed, StreamTag::product_system, idx));
    const CVector vb = complex_gaussian(bath_dim, stream_seed(cfg.seed, StreamTag::product_bath, idx));
    CVector x(static_cast<Eigen::Index>(dim));
    for (Eigen::Index m = 0; m < vs.size(); ++m) x.segment(m * nb, nb) = vs(m) * vb;
    const CMatrix ax = a.apply_block(x);
    out.samples[static_cast<std::size_t>(j)] = (x.adjoint() * ax)(0, 0).real();
  });
  for (double q : out.samples) {
    out.system_view_total += q;
    out.bath_view_total += q;
  }
  const double n = static_cast<double>(cfg.n_v);
  out.mean = out.system_view_total / n;
  double var = 0.0;
  for (double q : out.samples) var += (q - out.mean) * (q - out.mean);
  out.standard_error = cfg.n_v > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
  return out;
}

}  // namespace mforce
