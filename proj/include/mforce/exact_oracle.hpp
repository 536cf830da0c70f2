#pragma once

// Ground truth for validation: dense exact diagonalisation (small N), the
// closed-form two-site reduced quantities of the nearest-neighbour XX chain,
// and the high/low temperature limits of the mean force Hamiltonian.

#include "mforce/block_krylov.hpp"
#include "mforce/linalg.hpp"
#include "mforce/spin_hamiltonian.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace mforce {

/// Largest total dimension handled by the dense paths.
inline constexpr std::size_t kDenseLimit = 4096;

/// sigma^{x,y,z} = 2 S^{x,y,z} in the basis m = s, s-1, ..., -s.
inline std::array<CMatrix, 3> spin_matrices(double spin) {
  const int d = static_cast<int>(std::lround(2.0 * spin)) + 1;
  CMatrix plus = CMatrix::Zero(d, d);
  CMatrix z = CMatrix::Zero(d, d);
  for (int a = 0; a < d; ++a) {
    const double m = spin - a;
    z(a, a) = 2.0 * m;
    if (a > 0) plus(a - 1, a) = std::sqrt(spin * (spin + 1.0) - m * (m + 1.0));
  }
  const CMatrix minus = plus.adjoint();
  const Complex i{0.0, 1.0};
  return {plus + minus, -i * (plus - minus), z};
}

/// Dense matrix of one role, assembled term by term from the explicit local
/// spin matrices (no use of the matrix-free kernels).
inline CMatrix dense_hamiltonian(const SpinSystemSpec& spec, Role role) {
  const RoleLattice lat = role_lattice(spec, role);
  const int d = spec.local_dim();
  const std::size_t dim = SpinSystemSpec::checked_power(d, lat.n_sites);
  if (dim > kDenseLimit) throw DimensionError("dense_hamiltonian: dimension above dense limit");
  const auto sigma = spin_matrices(spec.spin);
  std::vector<std::size_t> stride(static_cast<std::size_t>(lat.n_sites), 1);
  for (int i = lat.n_sites - 2; i >= 0; --i) stride[static_cast<std::size_t>(i)] = stride[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(d);
  auto digit = [&](std::size_t x, int site) { return static_cast<int>((x / stride[static_cast<std::size_t>(site)]) % static_cast<std::size_t>(d)); };

  CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (const Term& t : lat.terms) {
    const CMatrix& s = sigma[static_cast<std::size_t>(t.axis)];
    for (std::size_t x = 0; x < dim; ++x) {
      const int xa = digit(x, t.site_a);
      const std::size_t base_a = x - static_cast<std::size_t>(xa) * stride[static_cast<std::size_t>(t.site_a)];
      if (t.site_b < 0) {
        for (int ya = 0; ya < d; ++ya)
          h(static_cast<Eigen::Index>(base_a + static_cast<std::size_t>(ya) * stride[static_cast<std::size_t>(t.site_a)]), static_cast<Eigen::Index>(x)) +=
              t.coefficient * s(ya, xa);
        continue;
      }
      const int xb = digit(x, t.site_b);
      const std::size_t base = base_a - static_cast<std::size_t>(xb) * stride[static_cast<std::size_t>(t.site_b)];
      for (int ya = 0; ya < d; ++ya)
        for (int yb = 0; yb < d; ++yb) {
          const Complex e = s(ya, xa) * s(yb, xb);
          if (e == Complex{}) continue;
          const std::size_t y = base + static_cast<std::size_t>(ya) * stride[static_cast<std::size_t>(t.site_a)] +
                                static_cast<std::size_t>(yb) * stride[static_cast<std::size_t>(t.site_b)];
          h(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) += t.coefficient * e;
        }
    }
  }
  return h;
}

/// Real form of dense_hamiltonian; XY/XXZ models are real in this basis.
inline RMatrix dense_hamiltonian_real(const SpinSystemSpec& spec, Role role) {
  const CMatrix h = dense_hamiltonian(spec, role);
  if (h.imag().cwiseAbs().maxCoeff() > 1e-13) throw NumericalError("dense_hamiltonian_real: matrix is not real");
  return h.real();
}

/// (tr_b M)[m, n] = sum_i M[(m, i), (n, i)] with the system as leading index.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> dense_partial_trace(
    const Eigen::MatrixBase<Derived>& m, std::size_t system_dim) {
  if (m.rows() != m.cols()) throw DimensionError("dense_partial_trace: matrix must be square");
  const auto ns = static_cast<Eigen::Index>(system_dim);
  if (ns == 0 || m.rows() % ns != 0) throw DimensionError("dense_partial_trace: system dimension does not divide");
  const Eigen::Index nb = m.rows() / ns;
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(ns, ns);
  for (Eigen::Index a = 0; a < ns; ++a)
    for (Eigen::Index b = 0; b < ns; ++b) out(a, b) = m.block(a * nb, b * nb, nb, nb).trace();
  return out;
}

template <typename Derived>
auto dense_partial_trace(const Eigen::MatrixBase<Derived>& m, int n_system, int local_dim) {
  return dense_partial_trace(m, SpinSystemSpec::checked_power(local_dim, n_system));
}

struct DenseReduced {
  double beta = 0.0;
  HermitianSmall rho;
  HermitianSmall h_star;
  double log_z_star = 0.0;
  double z_star = 0.0;
  RVector rho_eigenvalues;  // descending
  RVector h_eigenvalues;    // ascending
};

/// Exact rho*(beta), H*(beta), Z*(beta) by full diagonalisation of H_t and
/// H_b. Diagonalises once; evaluate at any number of temperatures.
class DenseOracle {
 public:
  explicit DenseOracle(const SpinSystemSpec& spec) : system_dim_(spec.system_dim()) {
    if (spec.total_dim() > kDenseLimit) throw DimensionError("DenseOracle: dimension above dense limit");
    system_h_ = dense_hamiltonian(spec, Role::system);
    Eigen::SelfAdjointEigenSolver<RMatrix> total(dense_hamiltonian_real(spec, Role::total));
    Eigen::SelfAdjointEigenSolver<RMatrix> bath(dense_hamiltonian_real(spec, Role::bath), Eigen::EigenvaluesOnly);
    if (total.info() != Eigen::Success || bath.info() != Eigen::Success)
      throw NumericalError("DenseOracle: eigensolver failed");
    total_values_ = total.eigenvalues();
    total_vectors_ = total.eigenvectors();
    bath_values_ = bath.eigenvalues();
  }

  double ground_energy_total() const { return total_values_(0); }
  double ground_energy_bath() const { return bath_values_(0); }
  const RVector& total_spectrum() const { return total_values_; }
  const RMatrix& total_eigenvectors() const { return total_vectors_; }
  const HermitianSmall& system_hamiltonian() const { return system_h_; }
  std::size_t system_dim() const { return system_dim_; }

  /// tr_b(exp(-beta (H_t - E_t))), E_t the total ground energy.
  RMatrix shifted_partial_trace(double beta) const {
    const double e0 = total_values_(0);
    RVector w = (-(beta) * (total_values_.array() - e0)).exp().sqrt().matrix();
    const RMatrix scaled = total_vectors_ * w.asDiagonal();
    const auto ns = static_cast<Eigen::Index>(system_dim_);
    const Eigen::Index nb = scaled.rows() / ns;
    RMatrix out(ns, ns);
    for (Eigen::Index a = 0; a < ns; ++a)
      for (Eigen::Index b = 0; b < ns; ++b)
        out(a, b) = scaled.middleRows(a * nb, nb).cwiseProduct(scaled.middleRows(b * nb, nb)).sum();
    return out;
  }

  /// ln Z_b(beta) in log-domain form.
  double log_bath_partition(double beta) const {
    const double e0 = bath_values_(0);
    return -beta * e0 + std::log((-(beta) * (bath_values_.array() - e0)).exp().sum());
  }

  double log_total_partition(double beta) const {
    const double e0 = total_values_(0);
    return -beta * e0 + std::log((-(beta) * (total_values_.array() - e0)).exp().sum());
  }

  DenseReduced at(double beta) const {
    if (!(beta > 0.0)) throw std::invalid_argument("DenseOracle::at: beta must be > 0");
    const RMatrix num = shifted_partial_trace(beta);
    const double e_t = total_values_(0);
    const double log_zb = log_bath_partition(beta);
    DenseReduced out;
    out.beta = beta;
    const double tr = num.trace();
    out.rho = (num / tr).cast<Complex>();
    // ln(num * e^{-beta E_t} / Z_b) with the shift pulled out of the log.
    Eigen::SelfAdjointEigenSolver<RMatrix> es(0.5 * (num + num.transpose()));
    RVector h(es.eigenvalues().size());
    for (Eigen::Index i = 0; i < h.size(); ++i)
      h(i) = -(std::log(es.eigenvalues()(i)) - beta * e_t - log_zb) / beta;
    out.h_star = (es.eigenvectors() * h.asDiagonal() * es.eigenvectors().transpose()).cast<Complex>();
    out.log_z_star = std::log(tr) - beta * e_t - log_zb;
    out.z_star = std::exp(out.log_z_star);
    const auto n = h.size();
    out.rho_eigenvalues.resize(n);
    out.h_eigenvalues = h.reverse();
    for (Eigen::Index i = 0; i < n; ++i) out.rho_eigenvalues(i) = es.eigenvalues()(n - 1 - i) / tr;
    return out;
  }

 private:
  std::size_t system_dim_;
  HermitianSmall system_h_;
  RVector total_values_;
  RMatrix total_vectors_;
  RVector bath_values_;
};

inline DenseReduced dense_reduced(const SpinSystemSpec& spec, double beta) { return DenseOracle(spec).at(beta); }

// ---------------------------------------------------------------------------
// Solvable nearest-neighbour XX chain, system = sites 1 and 2.

inline std::vector<double> single_particle_energies(int n, double coupling, double field) {
  std::vector<double> lam(static_cast<std::size_t>(n));
  for (int k = 1; k <= n; ++k)
    lam[static_cast<std::size_t>(k - 1)] = field - 2.0 * coupling * std::cos(k * std::numbers::pi / (n + 1));
  return lam;
}

namespace detail {

inline double fermi(double x) {  // 1 / (1 + e^x)
  if (x > 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

inline double softplus(double x) {  // ln(1 + e^x)
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

/// ln Z_N = beta N h / 2 + sum_k ln(1 + exp(-beta lambda_k)).
inline double solvable_chain_log_partition(int n, double coupling, double field, double beta) {
  double acc = beta * n * field / 2.0;
  for (double lam : single_particle_energies(n, coupling, field)) acc += detail::softplus(-beta * lam);
  return acc;
}

struct SolvableChainResult {
  std::vector<double> lambda;
  std::vector<double> occupation;
  double sx1sx2 = 0.0;
  double sz1 = 0.0;
  double sz2 = 0.0;
  double sz1sz2 = 0.0;
  double delta = 0.0;
  /// rho* eigenvalues in closed-form order p_1..p_4.
  std::array<double, 4> p{};
  double log_z_chain = 0.0;
  double log_z_bath = 0.0;
  double log_z_star = 0.0;
  double z_star = 0.0;
  /// H* eigenvalues h_j = -ln(Z* p_j) / beta, paired with p_j.
  std::array<double, 4> h{};

  RVector rho_sorted() const {  // descending
    RVector r(4);
    std::array<double, 4> s = p;
    std::sort(s.begin(), s.end(), std::greater<>());
    for (int i = 0; i < 4; ++i) r(i) = s[static_cast<std::size_t>(i)];
    return r;
  }
  RVector h_sorted() const {  // ascending
    RVector r(4);
    std::array<double, 4> s = h;
    std::sort(s.begin(), s.end());
    for (int i = 0; i < 4; ++i) r(i) = s[static_cast<std::size_t>(i)];
    return r;
  }
};

inline SolvableChainResult solvable_chain(int n, double coupling, double field, double beta) {
  if (n < 3) throw std::invalid_argument("solvable_chain: need N >= 3");
  if (!(beta > 0.0)) throw std::invalid_argument("solvable_chain: beta must be > 0");
  SolvableChainResult r;
  r.lambda = single_particle_energies(n, coupling, field);
  r.occupation.resize(r.lambda.size());
  for (std::size_t i = 0; i < r.lambda.size(); ++i) r.occupation[i] = detail::fermi(beta * r.lambda[i]);

  const double norm = 4.0 / (n + 1);
  const double q = std::numbers::pi / (n + 1);
  double xx = 0.0;
  double z1 = 0.0;
  double z2 = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double occ = r.occupation[static_cast<std::size_t>(k - 1)];
    xx += std::sin(k * q) * std::sin(2 * k * q) * occ;
    z1 += std::sin(k * q) * std::sin(k * q) * occ;
    z2 += std::sin(2 * k * q) * std::sin(2 * k * q) * occ;
  }
  r.sx1sx2 = -norm * xx;
  r.sz1 = norm * z1 - 1.0;
  r.sz2 = norm * z2 - 1.0;
  r.sz1sz2 = r.sz1 * r.sz2 - r.sx1sx2 * r.sx1sx2;
  r.delta = std::sqrt(4.0 * r.sx1sx2 * r.sx1sx2 + (r.sz1 - r.sz2) * (r.sz1 - r.sz2));
  r.p = {(1.0 + r.sz1 + r.sz2 + r.sz1sz2) / 4.0, (1.0 - r.delta - r.sz1sz2) / 4.0,
         (1.0 + r.delta - r.sz1sz2) / 4.0, (1.0 - r.sz1 - r.sz2 + r.sz1sz2) / 4.0};
  for (double& p : r.p) p = std::max(p, 0.0);  // rounding below zero at very low T

  r.log_z_chain = solvable_chain_log_partition(n, coupling, field, beta);
  r.log_z_bath = solvable_chain_log_partition(n - 2, coupling, field, beta);
  r.log_z_star = r.log_z_chain - r.log_z_bath;
  r.z_star = std::exp(r.log_z_star);
  for (std::size_t j = 0; j < 4; ++j)
    r.h[j] = r.p[j] > 0.0 ? -(r.log_z_star + std::log(r.p[j])) / beta : std::numeric_limits<double>::infinity();
  return r;
}

// ---------------------------------------------------------------------------
// Temperature limits.

struct HighTemperatureLimit {
  /// H_s, the beta -> 0 limit of H*.
  HermitianSmall h_system;
  /// max |tr_b(H_sb) / tr(I_b)|, when the total space is small enough.
  std::optional<double> residual;
};

inline HighTemperatureLimit high_temp_limit(const SpinSystemSpec& spec) {
  HighTemperatureLimit out;
  out.h_system = dense_hamiltonian(spec, Role::system);
  if (spec.total_dim() <= 1024) {
    const CMatrix hsb = dense_hamiltonian(spec, Role::interaction);
    out.residual = (dense_partial_trace(hsb, spec.system_dim()) / static_cast<double>(spec.bath_dim())).cwiseAbs().maxCoeff();
  }
  return out;
}

struct LowTemperatureLimit {
  HermitianSmall rho;
  /// E_t - E_b, the common beta -> infinity limit of every H* eigenvalue.
  double shift = 0.0;
  double ground_total = 0.0;
  double ground_bath = 0.0;
  int degeneracy = 1;
  /// An excited level sits within 10x the degeneracy threshold.
  bool ambiguous = false;
  /// Lanczos path: a single ground state was assumed, not detected.
  bool single_ground_state_assumed = false;
};

struct LowTemperatureOptions {
  double relative_gap = 1e-9;
  int lanczos_steps = 200;
  std::uint64_t seed = 7;
};

inline LowTemperatureLimit low_temp_limit(const SpinSystemSpec& spec, const LowTemperatureOptions& opts = {}) {
  LowTemperatureLimit out;
  const std::size_t ns = spec.system_dim();
  if (spec.total_dim() <= kDenseLimit) {
    Eigen::SelfAdjointEigenSolver<RMatrix> total(dense_hamiltonian_real(spec, Role::total));
    Eigen::SelfAdjointEigenSolver<RMatrix> bath(dense_hamiltonian_real(spec, Role::bath), Eigen::EigenvaluesOnly);
    const RVector& w = total.eigenvalues();
    const double scale = std::max(std::abs(w(0)), std::abs(w(w.size() - 1)));
    const double threshold = opts.relative_gap * std::max(scale, 1.0);
    int r = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double gap = w(i) - w(0);
      if (gap <= threshold) {
        ++r;
      } else if (gap <= 10.0 * threshold) {
        out.ambiguous = true;
      }
    }
    RMatrix acc = RMatrix::Zero(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ns));
    for (int i = 0; i < r; ++i) {
      const RVector psi = total.eigenvectors().col(i);
      acc += dense_partial_trace(psi * psi.transpose(), ns);
    }
    out.rho = (acc / static_cast<double>(r)).cast<Complex>();
    out.degeneracy = r;
    out.ground_total = w(0);
    out.ground_bath = bath.eigenvalues()(0);
  } else {
    const auto total = build(spec, Role::total);
    const auto bath = build(spec, Role::bath);
    const GroundState g = ground_state(total, opts.lanczos_steps, opts.seed);
    const auto nb = static_cast<Eigen::Index>(spec.bath_dim());
    CMatrix rho(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ns));
    for (Eigen::Index a = 0; a < rho.rows(); ++a)
      for (Eigen::Index b = 0; b < rho.cols(); ++b)
        rho(a, b) = g.vector.segment(b * nb, nb).dot(g.vector.segment(a * nb, nb));
    out.rho = hermitian_part(rho);
    out.ground_total = g.energy;
    out.ground_bath = ground_energy(bath, opts.lanczos_steps, opts.seed);
    out.single_ground_state_assumed = true;
  }
  out.shift = out.ground_total - out.ground_bath;
  return out;
}

}  // namespace mforce
