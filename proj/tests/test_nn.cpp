#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fedsoup/error.hpp"
#include "fedsoup/metrics.hpp"
#include "fedsoup/nn.hpp"
#include "test_util.hpp"

namespace fedsoup {
namespace {

using testing::max_rel_error;
using testing::random_batch;
using testing::random_params;
using testing::rows_of;
using testing::vec_of;

TEST(MlpArchitecture, ParamCountSumsLayerPairs) {
  MlpArchitecture arch{{2, 8, 2}, Activation::kRelu};
  EXPECT_EQ(arch.param_count(), 2 * 8 + 8 + 8 * 2 + 2);
  EXPECT_THROW((MlpArchitecture{{3}, Activation::kRelu}.validate()),
               ConfigError);
  EXPECT_THROW((MlpArchitecture{{3, 0, 2}, Activation::kRelu}.validate()),
               ConfigError);
}

TEST(Forward, ZeroParamsGiveZeroLogits) {
  std::mt19937_64 rng(1);
  MlpArchitecture arch{{3, 5, 4}, Activation::kTanh};
  const Batch batch = random_batch(6, 3, 4, rng);
  const auto logits = forward(arch, ParamVector::Zero(arch.param_count()), batch);
  EXPECT_EQ(logits.rows(), 6);
  EXPECT_EQ(logits.cols(), 4);
  EXPECT_TRUE((logits.array() == 0.0).all());
}

TEST(Forward, IdentityLayer) {
  MlpArchitecture arch{{2, 2}, Activation::kRelu};
  ParamVector params(6);
  params << 1, 0, 0, 1, 0, 0;  // W = I (column-major), b = 0
  Batch batch;
  batch.features.resize(1, 2);
  batch.features << 1, 2;
  batch.labels = {0};
  const auto logits = forward(arch, params, batch);
  EXPECT_EQ(logits(0, 0), 1.0);
  EXPECT_EQ(logits(0, 1), 2.0);
}

TEST(Forward, MatchesDenseReference) {
  std::mt19937_64 rng(7);
  for (Activation act : {Activation::kRelu, Activation::kTanh}) {
    MlpArchitecture arch{{2, 8, 2}, act};
    const Batch batch = random_batch(5, 2, 2, rng);
    const ParamVector params = random_params(arch.param_count(), rng);
    const auto got = rows_of(forward(arch, params, batch));
    const auto want =
        oracle::dense_forward(arch.layer_sizes, vec_of(params),
                              rows_of(batch.features),
                              act == Activation::kRelu);
    for (std::size_t i = 0; i < got.size(); ++i) {
      for (std::size_t j = 0; j < got[i].size(); ++j) {
        EXPECT_NEAR(got[i][j], want[i][j], 1e-12);
      }
    }
  }
}

TEST(Forward, DimensionMismatchIsConfigError) {
  std::mt19937_64 rng(3);
  MlpArchitecture arch{{2, 4, 2}, Activation::kRelu};
  const Batch batch = random_batch(4, 3, 2, rng);
  EXPECT_THROW(forward(arch, ParamVector::Zero(arch.param_count()), batch),
               ConfigError);
  const Batch ok = random_batch(4, 2, 2, rng);
  EXPECT_THROW(forward(arch, ParamVector::Zero(5), ok), ConfigError);
  EXPECT_THROW(grad(arch, ParamVector::Zero(5), ok), ConfigError);
}

TEST(LossCe, UniformLogitsGiveLogC) {
  for (int classes : {2, 3, 7}) {
    Matrix<double> logits = Matrix<double>::Zero(4, classes);
    EXPECT_NEAR(loss_ce(logits, {0, 1, 0, 1}), std::log(double(classes)),
                1e-15);
  }
  EXPECT_NEAR(loss_ce(Matrix<double>::Zero(3, 2), {0, 1, 1}), 0.693147, 1e-6);
}

TEST(LossCe, SaturatedSoftmaxIsNearZero) {
  Matrix<double> logits = Matrix<double>::Zero(2, 3);
  logits(0, 1) = 30.0;
  logits(1, 2) = 30.0;
  const double l = loss_ce(logits, {1, 2});
  EXPECT_GE(l, 0.0);
  EXPECT_LT(l, 1e-12);
}

TEST(LossCe, MatchesPerSampleLogSumExp) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::uniform_int_distribution<int> label(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix<double> logits(9, 4);
    std::vector<int> y;
    for (int i = 0; i < 9; ++i) {
      for (int c = 0; c < 4; ++c) logits(i, c) = normal(rng);
      y.push_back(label(rng));
    }
    const double got = loss_ce(logits, y);
    EXPECT_GE(got, 0.0);
    EXPECT_NEAR(got, oracle::cross_entropy(rows_of(logits), y), 1e-13);
  }
}

TEST(Grad, ZeroAtSymmetricMinimum) {
  // Every input appears once per label, so p = 1/2 everywhere is optimal for
  // the linear model and the gradient at the zero parameters vanishes.
  MlpArchitecture arch{{2, 2}, Activation::kRelu};
  Batch batch;
  batch.features.resize(6, 2);
  batch.features << 1, 2, 1, 2, -3, 0.5, -3, 0.5, 0.25, -1, 0.25, -1;
  batch.labels = {0, 1, 0, 1, 0, 1};
  const ParamVector g = grad(arch, ParamVector::Zero(6), batch);
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Grad, MatchesFiniteDifferencesOnRandomDraws) {
  std::mt19937_64 rng(2024);
  const std::vector<std::vector<int>> shapes = {
      {2, 8, 2}, {2, 4, 2}, {3, 5, 4, 3}, {4, 3}, {2, 6, 6, 2}};
  for (int trial = 0; trial < 20; ++trial) {
    const auto& sizes = shapes[static_cast<std::size_t>(trial) % shapes.size()];
    MlpArchitecture arch{sizes, trial % 2 ? Activation::kTanh
                                          : Activation::kRelu};
    const Batch batch = random_batch(8, sizes.front(), sizes.back(), rng);
    const ParamVector params = random_params(arch.param_count(), rng);
    const ParamVector analytic = grad(arch, params, batch);
    const ParamVector numeric = grad_fd(arch, params, batch, 1e-6);
    ASSERT_EQ(analytic.size(), params.size());
    EXPECT_TRUE(analytic.allFinite());
    EXPECT_LT(max_rel_error(analytic, numeric), 1e-5) << "trial " << trial;
  }
}

TEST(Grad, DuplicatedBatchGivesSameGradient) {
  std::mt19937_64 rng(5);
  MlpArchitecture arch{{2, 6, 3}, Activation::kTanh};
  const Batch batch = random_batch(7, 2, 3, rng);
  const Batch twice = concat({&batch, &batch});
  const ParamVector params = random_params(arch.param_count(), rng);
  const ParamVector g1 = grad(arch, params, batch);
  const ParamVector g2 = grad(arch, params, twice);
  EXPECT_LT((g1 - g2).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(loss(arch, params, batch), loss(arch, params, twice), 1e-14);
}

TEST(Grad, PermutationInvariant) {
  std::mt19937_64 rng(9);
  MlpArchitecture arch{{3, 5, 2}, Activation::kRelu};
  const Batch batch = random_batch(10, 3, 2, rng);
  std::vector<Eigen::Index> order(10);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const Batch shuffled = batch.select(order);
  const ParamVector params = random_params(arch.param_count(), rng);
  EXPECT_NEAR(loss(arch, params, batch), loss(arch, params, shuffled), 1e-14);
  EXPECT_LT((grad(arch, params, batch) - grad(arch, params, shuffled))
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
}

TEST(GradFd, QuadraticHook) {
  const LossFn half_square = [](const ParamVector& t) {
    return 0.5 * t.squaredNorm();
  };
  ParamVector theta(1);
  theta << 3.0;
  EXPECT_NEAR(grad_fd(half_square, theta, 1e-4)[0], 3.0, 1e-9);
}

TEST(GradFd, CentralDifferenceErrorIsSecondOrder) {
  // On a pure quadratic the central difference is exact, so the order is
  // observed on exp(theta), whose third derivative is non-zero.
  const LossFn f = [](const ParamVector& t) { return std::exp(t[0]); };
  ParamVector theta(1);
  theta << 0.7;
  const double exact = std::exp(0.7);
  const double e1 = std::abs(grad_fd(f, theta, 1e-2)[0] - exact);
  const double e2 = std::abs(grad_fd(f, theta, 5e-3)[0] - exact);
  EXPECT_NEAR(e1 / e2, 4.0, 0.05);
}

TEST(Optimizer, SgdStep) {
  OptimizerState state = OptimizerState::sgd(0.1, 1);
  ParamVector theta(1), g(1);
  theta << 1.0;
  g << 2.0;
  EXPECT_NEAR(optimizer_step(state, theta, g)[0], 0.8, 1e-15);
  EXPECT_EQ(state.step_count, 1);
}

TEST(Optimizer, ZeroGradientLeavesParamsUnchanged) {
  ParamVector theta(3);
  theta << 1, -2, 3;
  const ParamVector zero = ParamVector::Zero(3);
  OptimizerState sgd = OptimizerState::sgd(0.5, 3);
  EXPECT_EQ(optimizer_step(sgd, theta, zero), theta);
  OptimizerState adam = OptimizerState::adam(0.5, 0.9, 0.99, 3);
  EXPECT_EQ(optimizer_step(adam, theta, zero), theta);
  EXPECT_EQ(adam.step_count, 1);
}

TEST(Optimizer, AdamOnQuadraticMatchesReference) {
  OptimizerState state = OptimizerState::adam(0.1, 0.9, 0.99, 1);
  oracle::AdamReference reference(0.1, 0.9, 0.99, 1);
  ParamVector theta(1);
  theta << 5.0;
  std::vector<double> ref_theta = {5.0};
  std::vector<double> path = {5.0};
  for (int step = 0; step < 100; ++step) {
    const ParamVector g = theta;  // gradient of theta^2 / 2
    theta = optimizer_step(state, theta, g);
    reference.step(ref_theta, {ref_theta[0]});
    EXPECT_NEAR(theta[0], ref_theta[0], 1e-12);
    EXPECT_EQ(state.step_count, step + 1);
    path.push_back(theta[0]);
  }
  // |theta| shrinks every step until it first enters the 0.5 band.
  std::size_t entered = path.size();
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (std::abs(path[i]) < 0.5) {
      entered = i;
      break;
    }
  }
  ASSERT_LT(entered, path.size());
  for (std::size_t i = 1; i < entered; ++i) {
    EXPECT_LT(std::abs(path[i]), std::abs(path[i - 1]));
  }
}

TEST(TrainLocal, ZeroEpochsIsIdentity) {
  std::mt19937_64 gen(1);
  MlpArchitecture arch{{2, 4, 2}, Activation::kRelu};
  const Batch data = random_batch(20, 2, 2, gen);
  const ParamVector params = random_params(arch.param_count(), gen);
  OptimizerState opt = OptimizerState::adam(1e-3, 0.9, 0.99, params.size());
  Rng rng(3);
  EXPECT_EQ(train_local(arch, params, data, 0, 16, opt, rng), params);
}

TEST(TrainLocal, SeparableBlobsReachPerfectTrainingAccuracy) {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> noise(0.0, 0.4);
  Batch data;
  data.features.resize(80, 2);
  for (int i = 0; i < 80; ++i) {
    const int label = i % 2;
    const double c = label ? 2.0 : -2.0;
    data.features(i, 0) = c + noise(gen);
    data.features(i, 1) = c + noise(gen);
    data.labels.push_back(label);
  }
  MlpArchitecture arch{{2, 8, 2}, Activation::kRelu};
  Rng init(4);
  const ParamVector start = init_params(arch, init);
  OptimizerState opt = OptimizerState::adam(0.05, 0.9, 0.99, start.size());
  Rng rng(5);
  const ParamVector trained = train_local(arch, start, data, 30, 16, opt, rng);
  EXPECT_EQ(accuracy(arch, trained, data), 1.0);
}

TEST(TrainLocal, SameStreamIsBitwiseDeterministic) {
  std::mt19937_64 gen(21);
  MlpArchitecture arch{{2, 6, 2}, Activation::kTanh};
  const Batch data = random_batch(45, 2, 2, gen);
  Rng init(1);
  const ParamVector start = init_params(arch, init);
  auto run = [&] {
    OptimizerState opt = OptimizerState::adam(1e-2, 0.9, 0.99, start.size());
    Rng rng = make_stream(99, StreamPurpose::kTrain, {0, 0});
    return train_local(arch, start, data, 3, 16, opt, rng);
  };
  const ParamVector a = run();
  const ParamVector b = run();
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
}

TEST(TrainLocal, EmptyDatasetIsConfigError) {
  MlpArchitecture arch{{2, 2}, Activation::kRelu};
  Batch empty;
  empty.features.resize(0, 2);
  OptimizerState opt = OptimizerState::sgd(0.1, 6);
  Rng rng(1);
  EXPECT_THROW(train_local(arch, ParamVector::Zero(6), empty, 1, 4, opt, rng),
               ConfigError);
}

TEST(InitParams, UniformWithinFanInBound) {
  MlpArchitecture arch{{4, 9, 3}, Activation::kRelu};
  Rng rng(8);
  const ParamVector p = init_params(arch, rng);
  ASSERT_EQ(p.size(), arch.param_count());
  EXPECT_LE(p.head(4 * 9 + 9).cwiseAbs().maxCoeff(), 0.5);
  EXPECT_LE(p.tail(9 * 3 + 3).cwiseAbs().maxCoeff(), 1.0 / 3.0);
}

}  // namespace
}  // namespace fedsoup
