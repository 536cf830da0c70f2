#pragma once

// Block Lanczos factorisation H Q = Q T + Q_{k+1} B_k E_k^dagger and block
// Gauss quadrature for the leading b x b corner of f[T].

#include "mforce/linalg.hpp"
#include "mforce/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace mforce {

struct LanczosOptions {
  /// Full reorthogonalisation against every stored block (two passes).
  bool reorthogonalize = true;
  /// Keep the Krylov basis Q (forced on by reorthogonalize).
  bool keep_basis = false;
  /// Relative size of diag(R) below which the QR of Z counts as rank deficient.
  double breakdown_tolerance = 1e-10;
};

/// Block Jacobi matrix from block Lanczos. diag holds A_1..A_k, off holds
/// B_1..B_{k-1} (upper triangular, nonnegative real diagonal).
struct BlockTridiagonal {
  int block_size = 0;
  std::vector<CMatrix> diag;
  std::vector<CMatrix> off;
  /// B_k, the coupling to the next (unformed) block. Empty after breakdown.
  CMatrix residual;
  /// [Q_1 ... Q_k] when retained.
  CMatrix basis;
  /// Q_{k+1} when the basis is retained and no breakdown occurred.
  CMatrix next_block;
  bool breakdown = false;
  /// Step at which Z became rank deficient (1-based), 0 if none.
  int breakdown_step = 0;

  int steps() const { return static_cast<int>(diag.size()); }
  int order() const { return steps() * block_size; }

  CMatrix assemble() const {
    const int b = block_size;
    const int n = order();
    CMatrix t = CMatrix::Zero(n, n);
    for (int j = 0; j < steps(); ++j) t.block(j * b, j * b, b, b) = diag[static_cast<std::size_t>(j)];
    for (int j = 0; j + 1 < steps(); ++j) {
      const CMatrix& bj = off[static_cast<std::size_t>(j)];
      t.block((j + 1) * b, j * b, b, b) = bj;
      t.block(j * b, (j + 1) * b, b, b) = bj.adjoint();
    }
    return t;
  }
};

namespace detail {

/// Householder QR with diag(R) made real and nonnegative.
inline void positive_qr(const CMatrix& z, CMatrix& q, CMatrix& r) {
  const Eigen::Index b = z.cols();
  Eigen::HouseholderQR<CMatrix> qr(z);
  r = qr.matrixQR().topLeftCorner(b, b).triangularView<Eigen::Upper>();
  q = qr.householderQ() * CMatrix::Identity(z.rows(), b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double mag = std::abs(r(i, i));
    if (mag == 0.0) continue;
    const Complex phase = r(i, i) / mag;
    r.row(i) *= std::conj(phase);
    q.col(i) *= phase;
  }
}

}  // namespace detail

/// Block Lanczos on `op` from the orthonormal block `start` for k steps.
/// Stops early, flagging breakdown, if Z loses rank.
template <LinearOperator Op>
BlockTridiagonal block_lanczos(const Op& op, const CMatrix& start, int k, const LanczosOptions& opts = {}) {
  const auto dim = static_cast<Eigen::Index>(op.dimension());
  const Eigen::Index b = start.cols();
  if (start.rows() != dim) throw DimensionError("block_lanczos: start block has wrong row count");
  if (b < 1) throw std::invalid_argument("block_lanczos: empty start block");
  if (k < 1) throw std::invalid_argument("block_lanczos: k must be >= 1");
  if (static_cast<Eigen::Index>(k) * b > dim) throw std::invalid_argument("block_lanczos: k * b exceeds the dimension");
  const CMatrix gram = start.adjoint() * start;
  if ((gram - CMatrix::Identity(b, b)).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("block_lanczos: start block is not orthonormal");

  const bool keep = opts.reorthogonalize || opts.keep_basis;
  BlockTridiagonal out;
  out.block_size = static_cast<int>(b);
  out.diag.reserve(static_cast<std::size_t>(k));
  out.off.reserve(static_cast<std::size_t>(k));
  if (keep) out.basis.resize(dim, static_cast<Eigen::Index>(k) * b);

  CMatrix q_prev;
  CMatrix b_prev;
  CMatrix q = start;
  for (int j = 1; j <= k; ++j) {
    if (keep) out.basis.middleCols((j - 1) * b, b) = q;
    CMatrix z = op.apply_block(q);
    const double scale = z.norm();
    if (j > 1) z.noalias() -= q_prev * b_prev.adjoint();
    CMatrix a = hermitian_part(q.adjoint() * z);
    z.noalias() -= q * a;
    out.diag.push_back(std::move(a));

    if (opts.reorthogonalize) {
      const auto filled = out.basis.leftCols(static_cast<Eigen::Index>(j) * b);
      for (int pass = 0; pass < 2; ++pass) {
        const CMatrix overlap = filled.adjoint() * z;
        z.noalias() -= filled * overlap;
      }
    }

    CMatrix q_next;
    CMatrix r;
    detail::positive_qr(z, q_next, r);
    const double smallest = r.diagonal().cwiseAbs().minCoeff();
    const bool deficient = scale == 0.0 || smallest <= opts.breakdown_tolerance * scale;

    if (j == k) {
      if (!deficient) {
        out.residual = r;
        if (keep) out.next_block = q_next;
      }
      break;
    }
    if (deficient) {
      out.breakdown = true;
      out.breakdown_step = j;
      break;
    }
    out.off.push_back(r);
    q_prev = std::move(q);
    b_prev = std::move(r);
    q = std::move(q_next);
  }
  if (keep) out.basis.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(out.steps()) * b);
  return out;
}

/// Ritz values of T together with the leading b rows of its eigenvectors;
/// enough to evaluate corner(f[T]) for any f without refactoring.
struct SpectralCorner {
  RVector nodes;
  CMatrix lead;  // b x (k b)

  int block_size() const { return static_cast<int>(lead.rows()); }

  template <typename F>
  CMatrix evaluate(F&& f) const {
    CVector w(nodes.size());
    for (Eigen::Index i = 0; i < nodes.size(); ++i) w(i) = Complex(static_cast<double>(f(nodes(i))), 0.0);
    CMatrix out = lead * w.asDiagonal() * lead.adjoint();
    return hermitian_part(out);
  }

  /// Scalar corner for b = 1.
  template <typename F>
  double evaluate_scalar(F&& f) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < nodes.size(); ++i) acc += std::norm(lead(0, i)) * static_cast<double>(f(nodes(i)));
    return acc;
  }

  double min_node() const { return nodes.minCoeff(); }
  double max_node() const { return nodes.maxCoeff(); }
};

inline SpectralCorner spectral_corner(const BlockTridiagonal& t) {
  if (t.steps() == 0) throw std::invalid_argument("spectral_corner: empty factorisation");
  const auto es = hermitian_eigen(t.assemble());
  return {es.eigenvalues(), es.eigenvectors().topRows(t.block_size)};
}

/// (<1| (x) I_b) f[T] (|1> (x) I_b), Hermitian by construction.
template <typename F>
HermitianSmall quadrature_corner(const BlockTridiagonal& t, F&& f) {
  return spectral_corner(t).evaluate(std::forward<F>(f));
}

/// Classic scalar Gauss quadrature (Golub-Welsch) from a tridiagonal Jacobi
/// matrix: nodes are its eigenvalues, weights the squared first components.
template <typename F>
double gauss_quadrature(const RVector& alpha, const RVector& beta, F&& f) {
  if (alpha.size() < 1 || beta.size() + 1 != alpha.size())
    throw DimensionError("gauss_quadrature: need k diagonal and k-1 off-diagonal entries");
  Eigen::SelfAdjointEigenSolver<RMatrix> es;
  RVector sub = beta;
  es.computeFromTridiagonal(alpha, sub, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw NumericalError("gauss_quadrature: eigensolver failed");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    const double w = es.eigenvectors()(0, i);
    acc += w * w * static_cast<double>(f(es.eigenvalues()(i)));
  }
  return acc;
}

/// Orthonormalised random start of width one for the given seed.
inline CMatrix random_unit_start(std::size_t dim, std::uint64_t seed) {
  CVector v = complex_gaussian(dim, stream_seed(seed, StreamTag::lanczos_start, 0));
  v /= v.norm();
  return v;
}

/// Smallest Ritz value of a b = 1 Lanczos run from a random start. Never
/// below the true ground energy.
template <LinearOperator Op>
double ground_energy(const Op& op, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("ground_energy: k must be >= 1");
  const int steps = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k), op.dimension()));
  const auto t = block_lanczos(op, random_unit_start(op.dimension(), seed), steps);
  return hermitian_eigen(t.assemble()).eigenvalues()(0);
}

struct GroundState {
  double energy = 0.0;
  CVector vector;
};

/// Lowest Ritz pair of a b = 1 Lanczos run (basis retained).
template <LinearOperator Op>
GroundState ground_state(const Op& op, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("ground_state: k must be >= 1");
  const int steps = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k), op.dimension()));
  LanczosOptions opts;
  opts.keep_basis = true;
  const auto t = block_lanczos(op, random_unit_start(op.dimension(), seed), steps, opts);
  const auto es = hermitian_eigen(t.assemble());
  GroundState g;
  g.energy = es.eigenvalues()(0);
  g.vector = t.basis * es.eigenvectors().col(0);
  g.vector /= g.vector.norm();
  return g;
}

/// max |Q^dagger Q - I| over the retained basis.
inline double orthogonality_loss(const BlockTridiagonal& t) {
  if (t.basis.cols() == 0) throw std::invalid_argument("orthogonality_loss: basis not retained");
  const CMatrix g = t.basis.adjoint() * t.basis;
  return (g - CMatrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

}  // namespace mforce
