#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedsoup/rng.hpp"

namespace fedsoup {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Flat parameter vector. Every model, checkpoint and Hessian direction in the
// library is one of these.
using ParamVector = Vector<double>;

enum class Activation { kRelu, kTanh };

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

// Fully connected network. layer_sizes = {input, hidden..., classes}.
// Parameters are laid out layer by layer as W (out x in, column-major)
// followed by b (out).
struct MlpArchitecture {
  std::vector<int> layer_sizes;
  Activation activation = Activation::kRelu;

  int input_dim() const { return layer_sizes.front(); }
  int class_count() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  Eigen::Index param_count() const;
  void validate() const;

  bool operator==(const MlpArchitecture&) const = default;
};

// Rows are samples.
struct Batch {
  Matrix<double> features;
  std::vector<int> labels;

  Eigen::Index size() const { return features.rows(); }
  bool empty() const { return features.rows() == 0; }
  void validate(int class_count) const;

  // Rows picked by index, in the given order.
  Batch select(const std::vector<Eigen::Index>& rows) const;
};

Batch concat(const std::vector<const Batch*>& parts);

ParamVector init_params(const MlpArchitecture& arch, Rng& rng);

Matrix<double> forward(const MlpArchitecture& arch, const ParamVector& params,
                       const Batch& batch);

// Mean softmax cross-entropy.
template <typename Derived>
double loss_ce(const Eigen::MatrixBase<Derived>& logits,
               const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    const double lse =
        peak + std::log((logits.row(i).array() - peak).exp().sum());
    total += lse - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(logits.rows());
}

// Row-wise softmax.
Matrix<double> softmax(const Matrix<double>& logits);

double loss(const MlpArchitecture& arch, const ParamVector& params,
            const Batch& batch);

// Backprop gradient of loss() with respect to params.
ParamVector grad(const MlpArchitecture& arch, const ParamVector& params,
                 const Batch& batch);

using LossFn = std::function<double(const ParamVector&)>;
using GradFn = std::function<ParamVector(const ParamVector&)>;

// Central differences, one coordinate at a time.
ParamVector grad_fd(const LossFn& loss_fn, const ParamVector& params,
                    double eps);
ParamVector grad_fd(const MlpArchitecture& arch, const ParamVector& params,
                    const Batch& batch, double eps);

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  ParamVector first_moment;
  ParamVector second_moment;
  std::int64_t step_count = 0;

  static OptimizerState sgd(double learning_rate, Eigen::Index size);
  static OptimizerState adam(double learning_rate, double beta1, double beta2,
                             Eigen::Index size);
};

// One update; advances the state in place and returns the new parameters.
ParamVector optimizer_step(OptimizerState& state, const ParamVector& params,
                           const ParamVector& gradient);

// Hook applied to every minibatch gradient before the optimizer sees it.
using GradientAdjust =
    std::function<void(const ParamVector& params, ParamVector& gradient)>;

// `epochs` passes of shuffled minibatches (Fisher-Yates per epoch; the last
// minibatch may be short).
ParamVector train_local(const MlpArchitecture& arch, ParamVector params,
                        const Batch& data, int epochs, int batch_size,
                        OptimizerState& optimizer, Rng& rng,
                        const GradientAdjust& adjust = {});

bool all_finite(const ParamVector& params);

}  // namespace fedsoup
