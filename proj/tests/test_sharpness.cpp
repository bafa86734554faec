#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "fedsoup/error.hpp"
#include "fedsoup/sharpness.hpp"
#include "test_util.hpp"

namespace fedsoup {
namespace {

using testing::random_batch;
using testing::random_params;
using testing::vec_of;

// Gradient hook of L = 1/2 theta^T A theta.
GradFn quadratic(const Matrix<double>& a) {
  return [a](const ParamVector& theta) -> ParamVector { return a * theta; };
}

Matrix<double> diag2(double x, double y) {
  Matrix<double> a = Matrix<double>::Zero(2, 2);
  a(0, 0) = x;
  a(1, 1) = y;
  return a;
}

ParamVector vec2(double x, double y) {
  ParamVector v(2);
  v << x, y;
  return v;
}

TEST(Hvp, QuadraticHookRecoversColumns) {
  const GradFn g = quadratic(diag2(2, 5));
  const ParamVector theta = vec2(0.3, -1.2);
  EXPECT_LT((hvp(g, theta, vec2(1, 0)) - vec2(2, 0)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((hvp(g, theta, vec2(0, 1)) - vec2(0, 5)).cwiseAbs().maxCoeff(), 1e-9);
  // Scaling v scales the product.
  EXPECT_LT((hvp(g, theta, vec2(0, 7)) - vec2(0, 35)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Hvp, LinearOnQuadraticHook) {
  Matrix<double> a(3, 3);
  a << 4, 1, 0, 1, 3, -1, 0, -1, 2;
  const GradFn g = quadratic(a);
  std::mt19937_64 rng(5);
  const ParamVector theta = random_params(3, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const ParamVector v1 = random_params(3, rng);
    const ParamVector v2 = random_params(3, rng);
    EXPECT_LT((hvp(g, theta, v1 + v2) - hvp(g, theta, v1) - hvp(g, theta, v2))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-6);
  }
}

TEST(Hvp, ZeroDirectionIsConfigError) {
  const GradFn g = quadratic(diag2(1, 1));
  EXPECT_THROW(hvp(g, vec2(0, 0), vec2(0, 0)), ConfigError);
  EXPECT_THROW(hvp(g, vec2(0, 0), ParamVector::Zero(3)), ConfigError);
}

TEST(Hvp, MatchesDenseHessianOnSmallMlp) {
  std::mt19937_64 rng(8);
  MlpArchitecture arch{{2, 4, 2}, Activation::kTanh};
  const Batch batch = random_batch(16, 2, 2, rng);
  const ParamVector theta = random_params(arch.param_count(), rng);
  const Matrix<double> h = dense_hessian(arch, theta, batch);
  for (int trial = 0; trial < 5; ++trial) {
    const ParamVector v = random_params(theta.size(), rng);
    const ParamVector want = h * v;
    const ParamVector got = hvp(arch, theta, batch, v);
    EXPECT_LT((got - want).norm() / want.norm(), 1e-4);
  }
}

TEST(PowerIteration, DiagonalQuadratic) {
  Rng rng(1);
  const auto r =
      power_iteration(quadratic(diag2(2, 5)), vec2(1, 1), 100, 1e-6, rng);
  EXPECT_NEAR(r.eigenvalue, 5.0, 1e-5);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.iterations, 30);
  EXPECT_NEAR(std::abs(r.eigenvector[1]), 1.0, 1e-3);
}

TEST(PowerIteration, SymmetricCoupledQuadratic) {
  Matrix<double> a(2, 2);
  a << 2, 1, 1, 2;
  Rng rng(2);
  const auto r = power_iteration(quadratic(a), vec2(0, 0), 100, 1e-6, rng);
  EXPECT_NEAR(r.eigenvalue, 3.0, 1e-5);
}

TEST(PowerIteration, NegativeDominantCurvatureKeepsSign) {
  Rng rng(3);
  const auto r =
      power_iteration(quadratic(diag2(1, -6)), vec2(0, 0), 200, 1e-9, rng);
  EXPECT_NEAR(r.eigenvalue, -6.0, 1e-5);
}

TEST(PowerIteration, MaxItersCapsWork) {
  Rng rng(4);
  // Nearly degenerate spectrum converges slowly.
  const auto r = power_iteration(quadratic(diag2(1.0, 1.0001)), vec2(0, 0), 3,
                                 1e-15, rng);
  EXPECT_LE(r.iterations, 3);
  Rng again(4);
  EXPECT_THROW(power_iteration(quadratic(diag2(1, 2)), vec2(0, 0), 0, 1e-6, again),
               ConfigError);
}

TEST(PowerIteration, MatchesDenseEigensolveOnSmallMlp) {
  std::mt19937_64 gen(10);
  MlpArchitecture arch{{2, 4, 2}, Activation::kTanh};
  const Batch batch = random_batch(16, 2, 2, gen);
  const ParamVector theta = random_params(arch.param_count(), gen);
  const double dense = dominant_eigenvalue(dense_hessian(arch, theta, batch));
  Rng rng(7);
  const auto r = power_iteration(arch, theta, batch, 1000, 1e-10, rng);
  EXPECT_LT(std::abs(r.eigenvalue - dense) / std::abs(dense), 1e-3);
  // Rayleigh bound against the largest eigenvalue.
  Eigen::SelfAdjointEigenSolver<Matrix<double>> solver(
      dense_hessian(arch, theta, batch));
  const double top = solver.eigenvalues().maxCoeff();
  EXPECT_LE(r.eigenvalue, top + 1e-3 * std::abs(top));
}

TEST(PowerIteration, DeterministicForFixedStream) {
  Rng a(9), b(9);
  const GradFn g = quadratic(diag2(3, 4));
  const auto ra = power_iteration(g, vec2(0, 0), 50, 1e-12, a);
  const auto rb = power_iteration(g, vec2(0, 0), 50, 1e-12, b);
  EXPECT_EQ(ra.eigenvalue, rb.eigenvalue);
  EXPECT_EQ(ra.eigenvector, rb.eigenvector);
  EXPECT_EQ(ra.iterations, rb.iterations);
}

TEST(DenseHessian, RecoversQuadratic) {
  Matrix<double> a(3, 3);
  a << 4, 1, 0, 1, 3, -1, 0, -1, 2;
  const Matrix<double> h = dense_hessian(quadratic(a), ParamVector::Zero(3));
  EXPECT_LT((h - a).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(DenseHessian, RawAsymmetryIsSmallOnMlps) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    MlpArchitecture arch{{2, 5, 2}, trial % 2 ? Activation::kRelu
                                              : Activation::kTanh};
    const Batch batch = random_batch(12, 2, 2, rng);
    const ParamVector theta = random_params(arch.param_count(), rng);
    const GradFn g = [&](const ParamVector& t) { return grad(arch, t, batch); };
    const Matrix<double> raw = fd_hessian_raw(g, theta, 1e-4);
    EXPECT_LT((raw - raw.transpose()).cwiseAbs().maxCoeff(), 1e-5);
    const Matrix<double> sym = dense_hessian(arch, theta, batch);
    EXPECT_EQ((sym - sym.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(DenseHessian, LinearSoftmaxMatchesAnalyticFormula) {
  std::mt19937_64 rng(12);
  for (int classes : {2, 3}) {
    MlpArchitecture arch{{3, classes}, Activation::kRelu};
    const Batch one = random_batch(1, 3, classes, rng);
    const ParamVector theta = random_params(arch.param_count(), rng);
    const Matrix<double> h = dense_hessian(arch, theta, one);
    const auto want = oracle::linear_ce_hessian(
        vec_of(theta), {one.features(0, 0), one.features(0, 1), one.features(0, 2)},
        classes);
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
      for (Eigen::Index j = 0; j < h.cols(); ++j) {
        EXPECT_NEAR(h(i, j), want[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)],
                    1e-6);
      }
    }
  }
}

TEST(DenseHessian, RefusesLargeModels) {
  EXPECT_THROW(dense_hessian(quadratic(Matrix<double>::Identity(201, 201)),
                             ParamVector::Zero(201)),
               ConfigError);
  EXPECT_NO_THROW(dense_hessian(quadratic(Matrix<double>::Identity(200, 200)),
                                ParamVector::Zero(200)));
}

TEST(LowerMedian, Conventions) {
  EXPECT_EQ(lower_median({3.0}), 3.0);
  EXPECT_EQ(lower_median({4.0, 1.0}), 1.0);
  EXPECT_EQ(lower_median({5.0, 1.0, 3.0}), 3.0);
  EXPECT_EQ(lower_median({9.0, 2.0, 7.0, 4.0}), 4.0);
  EXPECT_THROW(lower_median({}), ConfigError);
}

class SharpnessMetricTest : public ::testing::Test {
 protected:
  MlpArchitecture arch{{2, 4, 2}, Activation::kTanh};
  std::mt19937_64 gen{13};
  Batch data = random_batch(50, 2, 2, gen);
  ParamVector theta = random_params(arch.param_count(), gen);
  SharpnessConfig cfg;
};

TEST_F(SharpnessMetricTest, BatchesAndMedian) {
  const SharpnessResult r = sharpness_metric(arch, theta, data, cfg);
  ASSERT_EQ(r.per_batch_eigenvalues.size(), 3u);  // 50 / 16, tail dropped
  EXPECT_EQ(r.iterations_used.size(), 3u);
  EXPECT_EQ(r.converged_flags.size(), 3u);
  std::vector<double> sorted = r.per_batch_eigenvalues;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(r.median_eigenvalue, sorted[1]);
}

TEST_F(SharpnessMetricTest, SingleBatch) {
  const Batch first = data.select({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  const SharpnessResult r = sharpness_metric(arch, theta, first, cfg);
  ASSERT_EQ(r.per_batch_eigenvalues.size(), 1u);
  EXPECT_EQ(r.median_eigenvalue, r.per_batch_eigenvalues[0]);
}

TEST_F(SharpnessMetricTest, DuplicationKeepsMedian) {
  std::vector<Eigen::Index> full(48);
  std::iota(full.begin(), full.end(), 0);
  const Batch once = data.select(full);
  const Batch twice = concat({&once, &once});
  const SharpnessResult a = sharpness_metric(arch, theta, once, cfg);
  const SharpnessResult b = sharpness_metric(arch, theta, twice, cfg);
  EXPECT_EQ(b.per_batch_eigenvalues.size(), 6u);
  EXPECT_EQ(a.median_eigenvalue, b.median_eigenvalue);
}

TEST_F(SharpnessMetricTest, Deterministic) {
  const SharpnessResult a = sharpness_metric(arch, theta, data, cfg);
  const SharpnessResult b = sharpness_metric(arch, theta, data, cfg);
  EXPECT_EQ(a.per_batch_eigenvalues, b.per_batch_eigenvalues);
  EXPECT_EQ(a.iterations_used, b.iterations_used);
}

TEST_F(SharpnessMetricTest, TooFewSamplesIsConfigError) {
  const Batch small = data.select({0, 1, 2});
  EXPECT_THROW(sharpness_metric(arch, theta, small, cfg), ConfigError);
}

TEST(SharpnessScale, EigenvaluesScaleWithLoss) {
  Matrix<double> a(3, 3);
  a << 4, 1, 0, 1, 3, -1, 0, -1, 2;
  for (double c : {0.5, 3.0, 10.0}) {
    Rng r1(5), r2(5);
    const auto base = power_iteration(quadratic(a), ParamVector::Zero(3), 500,
                                      1e-12, r1);
    const auto scaled = power_iteration(quadratic(c * a), ParamVector::Zero(3),
                                        500, 1e-12, r2);
    EXPECT_NEAR(scaled.eigenvalue, c * base.eigenvalue,
                1e-8 * std::max(1.0, std::abs(c * base.eigenvalue)));
  }
}

}  // namespace
}  // namespace fedsoup
