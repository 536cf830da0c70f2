#include "mforce/exact_oracle.hpp"
#include "mforce/observables.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mforce;

TEST(Entropy, PureAndMixed) {
  CMatrix pure = CMatrix::Zero(4, 4);
  pure(0, 0) = 1.0;
  EXPECT_NEAR(von_neumann_entropy(pure), 0.0, 1e-15);
  EXPECT_NEAR(von_neumann_entropy(0.25 * CMatrix::Identity(4, 4)), std::log(4.0), 1e-14);
  RVector d(2);
  d << 1.1, -0.1;
  EXPECT_THROW(von_neumann_entropy(d.cast<Complex>().asDiagonal().toDenseMatrix()), NumericalError);
}

TEST(Entropy, SolvableChainPureSideOfTransition) {
  const auto sc = solvable_chain(16, 1.0, 2.0, 100.0);
  RVector p(4);
  for (int i = 0; i < 4; ++i) p(i) = sc.p[static_cast<std::size_t>(i)];
  EXPECT_LT(entropy_from_probabilities(p), 0.05);
}

TEST(BareDensity, GibbsState) {
  RVector w(2);
  w << -0.5, 0.5;
  const CMatrix h = w.cast<Complex>().asDiagonal();
  const CMatrix rho = bare_density(h, 2.0);
  EXPECT_NEAR(rho(0, 0).real(), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(trace_real(rho), 1.0, 1e-15);
}

TEST(Deviation, VanishesWithoutCoupling) {
  auto spec = make_chain(8, 2, 1.0, 0.3);
  spec.epsilon = 0.0;
  const auto d = dense_reduced(spec, 1.0);
  const HermitianSmall hs = dense_hamiltonian(spec, Role::system);
  EXPECT_NEAR(energy_deviation(d.h_star, d.rho, hs, bare_density(hs, 1.0)), 0.0, 1e-12);
  EXPECT_LT((d.h_star - hs).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Deviation, NonZeroWithCoupling) {
  const auto spec = make_chain(8, 2, 1.0, 0.3);
  const auto d = dense_reduced(spec, 1.0);
  const HermitianSmall hs = dense_hamiltonian(spec, Role::system);
  EXPECT_GT(std::abs(energy_deviation(d.h_star, d.rho, hs, bare_density(hs, 1.0))), 1e-3);
  EXPECT_THROW(energy_deviation(d.h_star, d.rho, CMatrix::Zero(2, 2), CMatrix::Zero(2, 2)), DimensionError);
}

TEST(FreeEnergy, Basics) {
  EXPECT_EQ(free_energy(1.0, 2.0), 0.0);
  EXPECT_NEAR(free_energy(std::exp(3.0), 1.5), -2.0, 1e-15);
  EXPECT_THROW(free_energy(0.0, 1.0), NumericalError);
  EXPECT_THROW(free_energy(1.0, 0.0), std::invalid_argument);
}

TEST(FreeEnergy, SolvableChainMatchesDense) {
  const auto sc = solvable_chain(8, 1.0, 0.3, 1.0);
  const auto d = dense_reduced(make_chain(8, 2, 1.0, 0.3), 1.0);
  EXPECT_NEAR(free_energy_from_log(sc.log_z_star, 1.0), free_energy(d.z_star, 1.0), 1e-10);
}

TEST(FreeEnergy, DecreasesWithTemperature) {
  // dF/dT = -S < 0
  const auto lo = solvable_chain(8, 1.0, 0.3, 2.0);
  const auto hi = solvable_chain(8, 1.0, 0.3, 1.0);
  EXPECT_LT(free_energy_from_log(hi.log_z_star, 1.0), free_energy_from_log(lo.log_z_star, 2.0));
}

TEST(ThermoRecord, SortedAndConsistent) {
  const auto spec = make_chain(8, 2, 1.0, 0.3);
  const auto d = dense_reduced(spec, 1.5);
  const HermitianSmall hs = dense_hamiltonian(spec, Role::system);
  const auto r = thermo_record(1.5, d.rho, d.h_star, d.log_z_star, hs);
  for (Eigen::Index i = 0; i + 1 < 4; ++i) {
    EXPECT_GE(r.rho_eigenvalues(i), r.rho_eigenvalues(i + 1));
    EXPECT_LE(r.h_eigenvalues(i), r.h_eigenvalues(i + 1));
  }
  EXPECT_NEAR(r.deviation, r.energy_system - r.energy_bare, 1e-15);
  EXPECT_GT(r.min_h_gap, 0.0);
  EXPECT_NEAR(min_gap((RVector(3) << 0.0, 1.0, 0.4).finished()), 0.4, 1e-15);
}
