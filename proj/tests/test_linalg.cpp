#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "odis/linalg.hpp"
#include "odis/oracle.hpp"

using namespace odis;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

double rel_diff(std::span<const double> a, std::span<const double> b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(NormalOperator, SingleChannelIsScaledIdentity) {
  for (std::size_t d : {1, 3}) {
    const NormalOperator op(OdisSpec{3, 5, 1, d}, 0.3, 0.0);
    const auto v = random_vec(op.size(), d);
    const auto hv = op(v);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(hv[i], 1.3 * v[i], 1e-14);
  }
}

TEST(NormalOperator, MatchesDenseOracle) {
  const OdisSpec s{2, 3, 2, 1};
  for (double lambda : {0.0, 0.5, 1.0}) {
    const auto M = oracle::to_eigen(materialize_dense(NormalOperator(s, 0.2, lambda)));
    EXPECT_EQ((M - oracle::normal_matrix(2, 3, 2, 1, 0.2, lambda)).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(NormalOperator, Symmetric) {
  const NormalOperator op(OdisSpec{4, 6, 3, 2}, 0.1, 0.7);
  const auto v = random_vec(op.size(), 1), w = random_vec(op.size(), 2);
  const double a = dot(op(v), w), b = dot(v, op(w));
  EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
}

TEST(NormalOperator, EigenvaluesAtLeastRho) {
  for (double rho : {0.01, 0.1, 1.0}) {
    const auto M = oracle::to_eigen(materialize_dense(NormalOperator(OdisSpec{2, 3, 3, 1}, rho, 0.5)));
    EXPECT_GE(oracle::min_eigenvalue(M), rho - 1e-10);
  }
}

TEST(NormalOperator, ShapeMismatch) {
  const NormalOperator op(OdisSpec{2, 3, 2, 1}, 0.1, 0);
  std::vector<double> v(5), out(12);
  EXPECT_THROW(op.apply(v, out), Error);
}

TEST(CInverse, ZeroFrequencyOnes) {
  const CyclicPreconditioner pre(OdisSpec{1, 3, 2, 1}, 1.0, 0.0);
  std::vector<std::complex<double>> v{1.0, 1.0};
  pre.apply_c_inverse(0, v);
  EXPECT_NEAR(std::abs(v[0] - 1.0 / 3.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(v[1] - 1.0 / 3.0), 0.0, 1e-15);
}

TEST(CInverse, SingleChannelScalar) {
  const CyclicPreconditioner pre(OdisSpec{1, 6, 1, 1}, 0.4, 0.0);
  for (std::size_t f = 0; f < 4; ++f) {
    std::vector<std::complex<double>> v{{0.3, -1.2}};
    pre.apply_c_inverse(f, v);
    EXPECT_NEAR(std::abs(v[0] - std::complex<double>(0.3, -1.2) / 1.4), 0.0, 1e-15);
  }
}

TEST(CInverse, MatchesDenseInverse) {
  const OdisSpec s{1, 5, 4, 2};
  const CyclicPreconditioner pre(s, 0.1, 0.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (std::size_t f = 0; f < pre.padded_length(); ++f) {
    Eigen::VectorXcd phi(4), v(4);
    for (int c = 0; c < 4; ++c) {
      phi(c) = pre.phase(f, static_cast<std::size_t>(c));
      v(c) = {g(rng), g(rng)};
    }
    const Eigen::MatrixXcd M = 0.1 * Eigen::MatrixXcd::Identity(4, 4) + phi * phi.adjoint();
    const Eigen::VectorXcd expect = M.inverse() * v;
    std::vector<std::complex<double>> got(v.data(), v.data() + 4);
    pre.apply_c_inverse(f, got);
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(std::abs(got[static_cast<std::size_t>(c)] - expect(c)), 0.0, 1e-12);
  }
}

TEST(CInverse, PhaseHasUnitNorm) {
  const CyclicPreconditioner pre(OdisSpec{1, 5, 4, 2}, 0.1, 0.0);
  for (std::size_t f = 0; f < pre.padded_length(); ++f) {
    double n = 0;
    for (std::size_t c = 0; c < 4; ++c) n += std::norm(pre.phase(f, c));
    EXPECT_NEAR(n, 4.0, 1e-12);
  }
}

TEST(Preconditioner, RejectsBadParameters) {
  EXPECT_THROW(CyclicPreconditioner(OdisSpec{1, 4, 2, 1}, 0.0, 0.0), Error);
  EXPECT_THROW(CyclicPreconditioner(OdisSpec{1, 4, 2, 1}, 0.1, -1.0), Error);
  EXPECT_THROW(CyclicPreconditioner(OdisSpec{1, 4, 2, 1}, 0.1, 0.0, std::size_t{4}), Error);
}

TEST(Preconditioner, SingleChannelNoPan) {
  const OdisSpec s{3, 7, 1, 1};
  const CyclicPreconditioner pre(s, 0.5, 0.0);
  const auto v = random_vec(pre.size(), 4);
  std::vector<double> out(v.size());
  pre.apply(v, out);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(out[i], v[i] / 1.5, 1e-14);
}

TEST(Preconditioner, ExactOnCyclicModel) {
  EXPECT_LE(oracle::cyclic_exactness_error(8, 3, 1, 0.1, 0.5), 1e-10);
  const auto grid = oracle::cyclic_grid_check();
  EXPECT_TRUE(grid.passed) << grid.error;
}

TEST(Preconditioner, ExactForLargerPadding) {
  // Any L >= W + d(C-1) gives an exact cyclic inverse, including non-smooth sizes.
  for (std::size_t L : {11, 13, 17}) EXPECT_LE(oracle::cyclic_exactness_error(L, 4, 2, 0.05, 1.0), 1e-10) << L;
}

TEST(Preconditioner, SymmetricPositiveDefinite) {
  for (const auto& c : oracle::preconditioner_checks(OdisSpec{2, 3, 2, 1})) EXPECT_TRUE(c.passed) << c.name;
  for (const auto& c : oracle::preconditioner_checks(OdisSpec{2, 4, 3, 2})) EXPECT_TRUE(c.passed) << c.name;
}

TEST(Preconditioner, TwoFftPassesPerApplication) {
  for (std::size_t C : {1, 3, 8}) {
    const CyclicPreconditioner pre(OdisSpec{4, 9, C, 2}, 0.1, 0.5);
    const auto v = random_vec(pre.size(), C);
    std::vector<double> out(v.size());
    pre.fft().reset_counters();
    for (int k = 1; k <= 3; ++k) {
      pre.apply(v, out);
      EXPECT_EQ(pre.fft().forward_passes(), static_cast<std::size_t>(k));
      EXPECT_EQ(pre.fft().inverse_passes(), static_cast<std::size_t>(k));
    }
  }
}

TEST(Preconditioner, CostScalesGentlyWithWidth) {
  auto per_apply = [](std::size_t W) {
    const CyclicPreconditioner pre(OdisSpec{64, W, 8, 1}, 0.1, 0.5);
    const auto v = random_vec(pre.size(), W);
    std::vector<double> out(v.size());
    pre.apply(v, out);
    double best = INFINITY;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < 10; ++i) pre.apply(v, out);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double ratio = per_apply(128) / per_apply(64);
  EXPECT_LE(ratio, 2.3);
  EXPECT_GT(ratio, 1.0);
}

TEST(Pcg, RecoversKnownSolution) {
  const OdisSpec s{8, 16, 4, 1};
  const NormalOperator op(s, 0.1, 1.0);
  const CyclicPreconditioner pre(s, 0.1, 1.0);
  const auto xstar = random_vec(op.size(), 10);
  const auto b = op(xstar);
  std::vector<double> x(op.size(), 0.0);
  const auto rep = pcg_solve(op, pre, b, x, 10, 1e-6);
  EXPECT_TRUE(rep.converged) << rep.relative_residual;
  EXPECT_LE(rep.iterations, 10u);
  EXPECT_LE(rel_diff(x, xstar), 1e-5);
}

TEST(Pcg, SingleChannelOneIteration) {
  const OdisSpec s{4, 5, 1, 2};
  const NormalOperator op(s, 0.3, 0.0);
  const CyclicPreconditioner pre(s, 0.3, 0.0);
  const auto b = random_vec(op.size(), 11);
  std::vector<double> x(op.size(), 0.0);
  EXPECT_EQ(pcg_solve(op, pre, b, x, 10, 1e-10).iterations, 1u);
  std::fill(x.begin(), x.end(), 0.0);
  EXPECT_EQ(cg_solve(op, b, x, 10, 1e-10).iterations, 1u);
}

TEST(Pcg, FewerIterationsThanCg) {
  const OdisSpec s{8, 16, 4, 1};
  const NormalOperator op(s, 0.1, 1.0);
  const CyclicPreconditioner pre(s, 0.1, 1.0);
  const auto b = op(random_vec(op.size(), 12));
  std::vector<double> x1(op.size(), 0.0), x2(op.size(), 0.0);
  const auto p = pcg_solve(op, pre, b, x1, 500, 1e-6);
  const auto c = cg_solve(op, b, x2, 500, 1e-6);
  ASSERT_TRUE(p.converged && c.converged);
  EXPECT_LT(p.iterations, c.iterations);
}

TEST(Pcg, AgreesWithCg) {
  const OdisSpec s{4, 8, 3, 2};
  const NormalOperator op(s, 0.05, 0.5);
  const CyclicPreconditioner pre(s, 0.05, 0.5);
  const auto b = random_vec(op.size(), 13);
  std::vector<double> x1(op.size(), 0.0), x2(op.size(), 0.0);
  ASSERT_TRUE(pcg_solve(op, pre, b, x1, 500, 1e-10).converged);
  ASSERT_TRUE(cg_solve(op, b, x2, 500, 1e-10).converged);
  for (std::size_t i = 0; i < x1.size(); ++i) EXPECT_NEAR(x1[i], x2[i], 1e-8);
}

TEST(Pcg, MatchesDenseSolve) {
  EXPECT_TRUE(oracle::x_step_check(OdisSpec{2, 3, 2, 1}).passed);
  EXPECT_TRUE(oracle::x_step_check(OdisSpec{4, 6, 3, 2}).passed);
}

TEST(Cg, SingularSystemDoesNotConverge) {
  const OdisSpec s{2, 4, 3, 1};
  const NormalOperator op(s, 0.0, 0.0);
  const auto M = oracle::to_eigen(materialize_dense(op));
  EXPECT_LE(oracle::min_eigenvalue(M), 1e-10);  // rank deficient across channels
  std::vector<double> b = random_vec(op.size(), 14), x(op.size(), 0.0);
  const auto rep = cg_solve(op, b, x, 50, 1e-8);
  EXPECT_FALSE(rep.converged);
  EXPECT_GT(rep.relative_residual, 1e-8);
}

// PCG minimizes the H-norm of the error over growing Krylov spaces, so that
// norm is non-increasing even though the residual 2-norm need not be.
TEST(Pcg, EnergyErrorMonotone) {
  for (double rho : {0.01, 0.1, 1.0})
    for (double lambda : {0.0, 0.5, 1.0}) {
      const OdisSpec s{16, 24, 6, 1};
      const NormalOperator op(s, rho, lambda);
      const CyclicPreconditioner pre(s, rho, lambda);
      const auto xstar = random_vec(op.size(), 15);
      const auto b = op(xstar);
      double previous = INFINITY;
      for (std::size_t budget = 1; budget <= 12; ++budget) {
        std::vector<double> x(op.size(), 0.0);
        const auto rep = pcg_solve(op, pre, b, x, budget, 1e-300);
        ASSERT_EQ(rep.residual_history.size(), rep.iterations + 1);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= xstar[i];
        const double energy = dot(x, op(x));
        EXPECT_LE(energy, previous * (1 + 1e-9) + 1e-24) << "rho " << rho << " lambda " << lambda << " k " << budget;
        previous = energy;
      }
    }
}

TEST(Pcg, ReportContract) {
  const OdisSpec s{4, 6, 3, 1};
  const NormalOperator op(s, 0.01, 0.5);
  const CyclicPreconditioner pre(s, 0.01, 0.5);
  const auto b = random_vec(op.size(), 16);
  std::vector<double> x(op.size(), 0.0);
  const auto rep = pcg_solve(op, pre, b, x, 2, 1e-14);
  EXPECT_EQ(rep.iterations, 2u);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.relative_residual, rep.residual_history.back());
}

TEST(Pcg, WarmStartAtSolutionTakesNoSteps) {
  const OdisSpec s{4, 6, 3, 1};
  const NormalOperator op(s, 0.1, 0.5);
  const CyclicPreconditioner pre(s, 0.1, 0.5);
  auto x = random_vec(op.size(), 17);
  const auto b = op(x);
  EXPECT_EQ(pcg_solve(op, pre, b, x, 10, 1e-10).iterations, 0u);
}

TEST(Pcg, ZeroRhsAndErrors) {
  const OdisSpec s{2, 3, 2, 1};
  const NormalOperator op(s, 0.1, 0.5);
  const CyclicPreconditioner pre(s, 0.1, 0.5);
  std::vector<double> b(op.size(), 0.0), x(op.size(), 1.0);
  EXPECT_TRUE(pcg_solve(op, pre, b, x, 5, 1e-6).converged);
  for (double v : x) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(pcg_solve(op, pre, b, x, 0, 1e-6), Error);
  EXPECT_THROW(pcg_solve(op, pre, b, x, 5, 0.0), Error);
  b[0] = NAN;
  EXPECT_THROW(pcg_solve(op, pre, b, x, 5, 1e-6), Error);
}

TEST(Materialize, IdentityAndGuard) {
  const auto I = materialize_dense(IdentityPreconditioner{6});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(I(r, c), r == c ? 1.0 : 0.0);
  EXPECT_THROW(materialize_dense(IdentityPreconditioner{513}), Error);
}

TEST(Fft, FastSizes) {
  EXPECT_EQ(next_fast_fft_size(71), 72u);
  EXPECT_EQ(next_fast_fft_size(11), 12u);
  EXPECT_EQ(next_fast_fft_size(49), 49u);
  EXPECT_EQ(CyclicPreconditioner::default_length(OdisSpec{1, 64, 8, 1}, PaddingPolicy::exact), 71u);
  EXPECT_EQ(CyclicPreconditioner::default_length(OdisSpec{1, 64, 8, 1}, PaddingPolicy::fast), 72u);
}
