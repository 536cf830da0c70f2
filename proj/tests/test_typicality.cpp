#include "mforce/exact_oracle.hpp"
#include "mforce/typicality.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mforce;

namespace {

SamplerConfig config(int n_v, int k, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.n_v = n_v;
  cfg.k = k;
  cfg.seed = seed;
  return cfg;
}

CMatrix random_hermitian(Eigen::Index n, std::uint64_t seed) {
  CMatrix a(n, n);
  for (Eigen::Index c = 0; c < n; ++c) a.col(c) = complex_gaussian(static_cast<std::size_t>(n), seed + static_cast<std::uint64_t>(c));
  return hermitian_part(a);
}

}  // namespace

TEST(BathStates, EnsembleAverageIsIdentity) {
  CMatrix acc = CMatrix::Zero(4, 4);
  const int n = 100000;
  for (int j = 0; j < n; ++j) {
    const CVector v = sample_bath_state(17, static_cast<std::uint64_t>(j), 4);
    acc += v * v.adjoint();
  }
  acc /= n;
  EXPECT_LT((acc - CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.02);
}

TEST(BathStates, DeterministicPerIndex) {
  const CVector a = sample_bath_state(99, 12, 16);
  const CVector b = sample_bath_state(99, 12, 16);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, sample_bath_state(99, 13, 16));
  EXPECT_NE(a, sample_bath_state(98, 12, 16));
}

TEST(BathStates, QuadraticFormEstimatesTrace) {
  const CMatrix b = random_hermitian(8, 1000);
  const int n = 100000;
  double mean = 0.0;
  double sq = 0.0;
  for (int j = 0; j < n; ++j) {
    const CVector v = sample_bath_state(5, static_cast<std::uint64_t>(j), 8);
    const double q = (v.adjoint() * b * v)(0, 0).real();
    mean += q;
    sq += q * q;
  }
  mean /= n;
  const double se = std::sqrt((sq / n - mean * mean) / (n - 1));
  EXPECT_LT(std::abs(mean - trace_real(b)), 3.0 * se);
}

TEST(PartialTraceEstimate, ConstantFunctionGivesNormSquared) {
  const auto spec = make_chain(6, 2, 1.0, 0.3);
  const auto op = build(spec, Role::total);
  const auto cfg = config(5, 4, 3);
  const auto est = estimate_partial_trace(op, 4, [](double) { return 1.0; }, cfg);
  for (int j = 0; j < cfg.n_v; ++j) {
    const double norm2 = sample_bath_state(cfg.seed, static_cast<std::uint64_t>(j), 16).squaredNorm();
    EXPECT_LT((est.per_sample[static_cast<std::size_t>(j)] - norm2 * CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PartialTraceEstimate, AgreesWithDenseWithinStandardErrors) {
  const auto spec = make_chain(8, 2, 1.0, 0.3);
  const auto op = build(spec, Role::total);
  const auto f = [](double x) { return std::exp(-x); };
  const auto est = estimate_partial_trace(op, 4, f, config(100, 30, 21));
  const CMatrix exact = dense_partial_trace(hermitian_function(dense_hamiltonian(spec, Role::total), f), 4);
  const RMatrix se = est.standard_error();
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j)
      EXPECT_LE(std::abs(est.value(i, j) - exact(i, j)), 5.0 * se(i, j) + 1e-10) << i << "," << j;
  EXPECT_EQ(est.breakdowns, 0);
  EXPECT_LT((est.value - est.value.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Transform, ScalarNumerator) {
  const auto t = eigenvalues_via_transform(3.0 * CMatrix::Identity(4, 4), 2.0, 1.0);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(t.rho(i), 0.25, 1e-15);
    EXPECT_NEAR(t.h_star(i), -std::log(1.5), 1e-15);
  }
  EXPECT_NEAR(t.rho.sum(), 1.0, 1e-14);
}

TEST(Transform, FlagsNonPositiveEigenvalues) {
  RVector d(3);
  d << 2.0, 1.0, -0.1;
  const auto t = eigenvalues_via_transform(d.cast<Complex>().asDiagonal().toDenseMatrix(), 1.0, 1.0);
  EXPECT_FALSE(t.defined[2]);
  EXPECT_TRUE(std::isnan(t.h_star(2)));
  EXPECT_TRUE(t.defined[0]);
  EXPECT_THROW(eigenvalues_via_transform(CMatrix::Zero(2, 2), 1.0, 1.0), NumericalError);
}

TEST(MeanForce, MatchesDenseAtUnitTemperature) {
  const auto spec = make_chain(8, 2, 1.0, 0.3);
  const auto d = dense_reduced(spec, 1.0);
  const auto est = sample_spin_system(spec, config(100, 30, 7)).evaluate(1.0);
  EXPECT_LT((est.h_eigenvalues - d.h_eigenvalues).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LT((est.h_eigenvalues - solvable_chain(8, 1.0, 0.3, 1.0).h_sorted()).cwiseAbs().maxCoeff(), 0.05);
  const HermitianSmall h = mean_force_hamiltonian(spec, 1.0, config(100, 30, 7));
  EXPECT_LT((h - est.h_star).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MeanForce, LogFreeRelationWithSameSamples) {
  const auto set = sample_spin_system(make_chain(8, 2, 1.0, 0.3), config(50, 30, 2));
  for (double beta : {0.3, 2.0, 20.0}) {
    const auto est = set.evaluate(beta);
    for (Eigen::Index i = 0; i < 4; ++i)
      EXPECT_NEAR(est.h_eigenvalues(i), -(est.log_z_star + std::log(est.rho_eigenvalues(i))) / beta, 1e-10);
    EXPECT_LT((hermitian_eigen(est.h_star).eigenvalues() - est.h_eigenvalues).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(MeanForce, HighTemperatureNoiseShrinks) {
  const auto spec = make_chain(8, 2, 1.0, 0.3);
  const HermitianSmall hs = dense_hamiltonian(spec, Role::system);
  double small = 0.0;
  double large = 0.0;
  const int reps = 6;
  for (int r = 0; r < reps; ++r) {
    small += sample_spin_system(spec, config(16, 10, 100 + r)).high_temperature_deviation(hs, 1e-4);
    large += sample_spin_system(spec, config(256, 10, 200 + r)).high_temperature_deviation(hs, 1e-4);
  }
  const double ratio = small / large;  // sqrt(256 / 16) = 4 expected
  EXPECT_GT(ratio, 2.0);
  EXPECT_LT(ratio, 8.0);
}

TEST(ReducedDensity, InfiniteTemperatureIsMaximallyMixed) {
  const auto rho = reduced_density(make_chain(8, 2, 1.0, 0.3), 1e-4, config(400, 10, 4));
  EXPECT_LT((rho - 0.25 * CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_NEAR(trace_real(rho), 1.0, 1e-14);
}

TEST(ReducedDensity, MatchesDense) {
  const auto spec = make_chain(8, 2, 1.0, 0.3);
  const DenseOracle oracle(spec);
  const auto set = sample_spin_system(spec, config(400, 30, 31));
  for (double beta : {0.1, 1.0, 10.0}) {
    const auto est = set.evaluate(beta);
    EXPECT_LT((est.rho_eigenvalues - oracle.at(beta).rho_eigenvalues).cwiseAbs().maxCoeff(), 0.02) << beta;
    const HermitianSmall rho = repair_density(est.rho);
    EXPECT_NEAR(trace_real(rho), 1.0, 1e-14);
    EXPECT_GE(hermitian_eigen(rho).eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(ReducedDensity, RepairRejectsLargeNegatives) {
  RVector d(2);
  d << 1.001, -0.001;
  EXPECT_THROW(repair_density(d.cast<Complex>().asDiagonal().toDenseMatrix()), NumericalError);
  d << 1.0 + 1e-12, -1e-12;
  const auto r = repair_density(d.cast<Complex>().asDiagonal().toDenseMatrix());
  EXPECT_EQ(r(1, 1).real(), 0.0);
}

TEST(SampleSet, ShiftInvariance) {
  const auto spec = make_chain(8, 2, 1.0, 0.3);
  auto none = config(20, 30, 8);
  none.shift = ShiftMode::none;
  auto expl = none;
  expl.shift = ShiftMode::explicit_value;
  expl.explicit_shift = -4.0;
  auto aut = none;
  aut.shift = ShiftMode::automatic;
  const auto a = sample_spin_system(spec, none).evaluate(2.0);
  const auto b = sample_spin_system(spec, expl).evaluate(2.0);
  const auto c = sample_spin_system(spec, aut).evaluate(2.0);
  EXPECT_LT((a.h_star - b.h_star).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((a.h_star - c.h_star).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(a.log_z_star, c.log_z_star, 1e-10);
}

TEST(SampleSet, UnshiftedOverflowIsReported) {
  auto cfg = config(4, 20, 8);
  cfg.shift = ShiftMode::none;
  const auto set = sample_spin_system(make_chain(8, 2, 1.0, 0.3), cfg);
  EXPECT_THROW(set.evaluate(1000.0), NumericalError);
  cfg.shift = ShiftMode::automatic;
  EXPECT_NO_THROW(sample_spin_system(make_chain(8, 2, 1.0, 0.3), cfg).evaluate(1000.0));
}

TEST(SampleSet, DeterministicAcrossThreadCounts) {
  const auto spec = make_chain(8, 2, 1.0, 0.3);
  auto one = config(12, 20, 55);
  auto many = one;
  many.threads = 3;
  const auto a = sample_spin_system(spec, one).evaluate(1.5);
  const auto b = sample_spin_system(spec, many).evaluate(1.5);
  EXPECT_EQ(a.numerator, b.numerator);
  EXPECT_EQ(a.bath_trace, b.bath_trace);
  EXPECT_EQ(a.h_star, b.h_star);
}

TEST(SampleSet, SameStreamForTotalAndBath) {
  const auto set = sample_spin_system(make_chain(6, 2, 1.0, 0.3), config(5, 8, 1));
  for (const auto& s : set.samples()) EXPECT_EQ(s.total_stream, s.bath_stream);
}

TEST(SampleSet, SmallestRunClampsIterations) {
  const auto set = sample_spin_system(make_chain(4, 2, 1.0, 0.3), config(1, 30, 1));
  EXPECT_EQ(set.lanczos_steps_total(), 4);
  EXPECT_EQ(set.lanczos_steps_bath(), 4);
  EXPECT_NO_THROW(set.evaluate(1.0));
}

TEST(SampleSet, JackknifeErrorsShrinkWithSamples) {
  const auto spec = make_chain(8, 2, 1.0, 0.3);
  const auto a = sample_spin_system(spec, config(20, 20, 3)).evaluate(1.0, true);
  const auto b = sample_spin_system(spec, config(320, 20, 3)).evaluate(1.0, true);
  EXPECT_GT(a.h_eigenvalue_se.mean(), b.h_eigenvalue_se.mean());
  EXPECT_TRUE(b.h_eigenvalue_se.allFinite());
}

TEST(ProductState, IdentityGivesNormProduct) {
  SamplerConfig cfg = config(10, 1, 6);
  cfg.distribution = Distribution::product_state;
  const DenseOperator id(CMatrix::Identity(16, 16));
  const auto est = product_state_estimate(id, 4, cfg);
  for (int j = 0; j < cfg.n_v; ++j) {
    const auto idx = static_cast<std::uint64_t>(j);
    const double ns = complex_gaussian(4, stream_seed(6, StreamTag::product_system, idx)).squaredNorm();
    const double nb = complex_gaussian(4, stream_seed(6, StreamTag::product_bath, idx)).squaredNorm();
    EXPECT_NEAR(est.samples[static_cast<std::size_t>(j)], ns * nb, 1e-12);
  }
  EXPECT_EQ(est.system_view_total, est.bath_view_total);
}

TEST(ProductState, MeanEstimatesTrace) {
  SamplerConfig cfg = config(100000, 1, 12);
  cfg.distribution = Distribution::product_state;
  const CMatrix a = random_hermitian(16, 77);
  const auto est = product_state_estimate(DenseOperator(a), 4, cfg);
  EXPECT_LT(std::abs(est.mean - trace_real(a)), 3.0 * est.standard_error);
  cfg.distribution = Distribution::gaussian;
  EXPECT_THROW(product_state_estimate(DenseOperator(a), 4, cfg), std::invalid_argument);
}

TEST(SamplerConfig, Validation) {
  SamplerConfig cfg;
  cfg.n_v = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SamplerConfig{};
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(mean_force_hamiltonian(make_chain(4, 2, 1.0, 0.0), 0.0, SamplerConfig{}), std::invalid_argument);
}
