#pragma once

// Scalar diagnostics derived from rho* and H*.

#include "mforce/linalg.hpp"
#include "mforce/typicality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace mforce {

/// -sum p ln p over a probability vector; entries in [-tol, 0] count as zero.
inline double entropy_from_probabilities(const RVector& p, double tol = 1e-10) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) < -tol) {
      std::ostringstream msg;
      msg << "von_neumann_entropy: eigenvalue " << p(i) << " is negative";
      throw NumericalError(msg.str());
    }
    if (p(i) > 0.0) s -= p(i) * std::log(p(i));
  }
  return s;
}

inline double von_neumann_entropy(const HermitianSmall& rho, double tol = 1e-10) {
  return entropy_from_probabilities(hermitian_eigen(rho).eigenvalues(), tol);
}

/// Gibbs state of H_s alone.
inline HermitianSmall bare_density(const HermitianSmall& h_system, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("bare_density: beta must be > 0");
  const auto es = hermitian_eigen(h_system);
  const RVector& w = es.eigenvalues();
  RVector p = (-beta * (w.array() - w(0))).exp().matrix();
  p /= p.sum();
  const CMatrix& u = es.eigenvectors();
  return hermitian_part(u * p.cast<Complex>().asDiagonal() * u.adjoint());
}

/// Re tr(H* rho*) - Re tr(H_s rho_s).
inline double energy_deviation(const HermitianSmall& h_star, const HermitianSmall& rho_star,
                               const HermitianSmall& h_system, const HermitianSmall& rho_system) {
  if (h_star.rows() != rho_star.rows() || h_system.rows() != rho_system.rows() || h_star.rows() != h_system.rows())
    throw DimensionError("energy_deviation: operator sizes differ");
  return (h_star * rho_star).trace().real() - (h_system * rho_system).trace().real();
}

inline double free_energy_from_log(double log_z, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("free_energy: beta must be > 0");
  if (!std::isfinite(log_z)) throw NumericalError("free_energy: ln Z is not finite");
  return -log_z / beta;
}

inline double free_energy(double z, double beta) {
  if (!(z > 0.0)) throw NumericalError("free_energy: Z must be > 0");
  return free_energy_from_log(std::log(z), beta);
}

/// Smallest spacing between consecutive sorted values.
inline double min_gap(const RVector& values) {
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < v.size(); ++i) g = std::min(g, v[i] - v[i - 1]);
  return g;
}

struct ThermoRecord {
  double beta = 0.0;
  RVector rho_eigenvalues;  // descending
  RVector h_eigenvalues;    // ascending
  double entropy = 0.0;
  double energy_system = 0.0;
  double energy_bare = 0.0;
  double deviation = 0.0;
  double log_z_star = 0.0;
  double min_h_gap = 0.0;
};

inline ThermoRecord thermo_record(double beta, const HermitianSmall& rho_star, const HermitianSmall& h_star,
                                  double log_z_star, const HermitianSmall& h_system) {
  ThermoRecord r;
  r.beta = beta;
  const RVector rho_asc = hermitian_eigen(rho_star).eigenvalues();
  r.rho_eigenvalues = rho_asc.reverse();
  r.h_eigenvalues = hermitian_eigen(h_star).eigenvalues();
  r.entropy = entropy_from_probabilities(rho_asc);
  const HermitianSmall rho_s = bare_density(h_system, beta);
  r.energy_system = (h_star * rho_star).trace().real();
  r.energy_bare = (h_system * rho_s).trace().real();
  r.deviation = r.energy_system - r.energy_bare;
  r.log_z_star = log_z_star;
  r.min_h_gap = min_gap(r.h_eigenvalues);
  return r;
}

inline ThermoRecord thermo_record(const MeanForceEstimate& est, const HermitianSmall& h_system) {
  ThermoRecord r = thermo_record(est.beta, repair_density(est.rho), est.h_star, est.log_z_star, h_system);
  r.h_eigenvalues = est.h_eigenvalues;
  return r;
}

}  // namespace mforce
