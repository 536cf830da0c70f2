#pragma once

// Dense linear-algebra vocabulary shared by every module: complex vectors and
// blocks, the matrix-free operator concept, and Hermitian matrix functions.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mforce {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

/// Dense Hermitian matrix on the system space (rho*, H*, partial traces).
using HermitianSmall = Eigen::MatrixXcd;

/// Anything that can act on a block of column vectors without exposing its
/// matrix. Single-vector application is a width-one block.
template <typename Op>
concept LinearOperator = requires(const Op& op, const CMatrix& block) {
  { op.dimension() } -> std::convertible_to<std::size_t>;
  { op.apply_block(block) } -> std::convertible_to<CMatrix>;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Explicit matrix wrapped as a LinearOperator. Used by tests and oracles.
class DenseOperator {
 public:
  explicit DenseOperator(CMatrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw DimensionError("DenseOperator: matrix must be square");
  }

  std::size_t dimension() const { return static_cast<std::size_t>(m_.rows()); }

  CMatrix apply_block(const CMatrix& v) const {
    if (v.rows() != m_.cols()) throw DimensionError("DenseOperator: block has wrong row count");
    return m_ * v;
  }

  CVector apply(const CVector& v) const { return apply_block(v); }

  const CMatrix& matrix() const { return m_; }

 private:
  CMatrix m_;
};

inline CMatrix hermitian_part(const CMatrix& x) { return 0.5 * (x + x.adjoint()); }

inline bool all_finite(const CMatrix& x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (!std::isfinite(x(i, j).real()) || !std::isfinite(x(i, j).imag())) return false;
  return true;
}

/// Eigendecomposition of the Hermitian part of `x`, ascending eigenvalues.
inline Eigen::SelfAdjointEigenSolver<CMatrix> hermitian_eigen(const CMatrix& x) {
  if (!all_finite(x)) throw NumericalError("hermitian_eigen: non-finite matrix entries");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(x));
  if (es.info() != Eigen::Success) throw NumericalError("hermitian_eigen: eigensolver failed");
  return es;
}

/// f[X] for Hermitian X via its eigendecomposition.
template <typename F>
CMatrix hermitian_function(const CMatrix& x, F&& f) {
  const auto es = hermitian_eigen(x);
  RVector fv = es.eigenvalues().unaryExpr([&](double t) { return static_cast<double>(f(t)); });
  const CMatrix& u = es.eigenvectors();
  return hermitian_part(u * fv.cast<Complex>().asDiagonal() * u.adjoint());
}

inline double trace_real(const CMatrix& x) { return x.trace().real(); }

}  // namespace mforce
