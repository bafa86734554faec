#include "fedsoup/nn.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fedsoup/error.hpp"

namespace fedsoup {

namespace {

using ConstMatrixMap = Eigen::Map<const Matrix<double>>;
using ConstVectorMap = Eigen::Map<const Vector<double>>;
using MatrixMap = Eigen::Map<Matrix<double>>;
using VectorMap = Eigen::Map<Vector<double>>;

Matrix<double> activate(const Matrix<double>& z, Activation activation) {
  switch (activation) {
    case Activation::kRelu:
      return z.cwiseMax(0.0);
    case Activation::kTanh:
      return z.array().tanh().matrix();
  }
  return z;
}

// d(activation)/dz, expressed through z and a = activation(z).
Matrix<double> activation_slope(const Matrix<double>& z,
                                const Matrix<double>& a,
                                Activation activation) {
  switch (activation) {
    case Activation::kRelu:
      return (z.array() > 0.0).cast<double>().matrix();
    case Activation::kTanh:
      return (1.0 - a.array().square()).matrix();
  }
  return Matrix<double>::Ones(z.rows(), z.cols());
}

void check_shapes(const MlpArchitecture& arch, const ParamVector& params,
                  const Batch& batch) {
  arch.validate();
  if (params.size() != arch.param_count()) {
    throw ConfigError("parameter vector has length " +
                      std::to_string(params.size()) + ", architecture needs " +
                      std::to_string(arch.param_count()));
  }
  if (batch.features.cols() != arch.input_dim()) {
    throw ConfigError("batch has " + std::to_string(batch.features.cols()) +
                      " features, architecture expects " +
                      std::to_string(arch.input_dim()));
  }
  if (static_cast<Eigen::Index>(batch.labels.size()) != batch.size()) {
    throw ConfigError("batch label count does not match row count");
  }
  if (batch.empty()) throw ConfigError("empty batch");
}

}  // namespace

std::string to_string(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

Eigen::Index MlpArchitecture::param_count() const {
  Eigen::Index count = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    count += static_cast<Eigen::Index>(layer_sizes[l]) * layer_sizes[l + 1] +
             layer_sizes[l + 1];
  }
  return count;
}

void MlpArchitecture::validate() const {
  if (layer_sizes.size() < 2) {
    throw ConfigError("architecture needs at least input and output layers");
  }
  for (int size : layer_sizes) {
    if (size < 1) throw ConfigError("layer sizes must be positive");
  }
}

void Batch::validate(int class_count) const {
  if (empty()) throw ConfigError("empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != size()) {
    throw ConfigError("batch label count does not match row count");
  }
  if (!features.allFinite()) throw ConfigError("non-finite feature value");
  for (int label : labels) {
    if (label < 0 || label >= class_count) {
      throw ConfigError("label " + std::to_string(label) + " outside [0, " +
                        std::to_string(class_count) + ")");
    }
  }
}

Batch Batch::select(const std::vector<Eigen::Index>& rows) const {
  Batch out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

Batch concat(const std::vector<const Batch*>& parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const Batch* part : parts) {
    rows += part->size();
    cols = part->features.cols();
  }
  Batch out;
  out.features.resize(rows, cols);
  Eigen::Index at = 0;
  for (const Batch* part : parts) {
    out.features.middleRows(at, part->size()) = part->features;
    out.labels.insert(out.labels.end(), part->labels.begin(),
                      part->labels.end());
    at += part->size();
  }
  return out;
}

ParamVector init_params(const MlpArchitecture& arch, Rng& rng) {
  arch.validate();
  ParamVector params(arch.param_count());
  Eigen::Index at = 0;
  for (int l = 0; l < arch.num_layers(); ++l) {
    const int fan_in = arch.layer_sizes[static_cast<std::size_t>(l)];
    const int fan_out = arch.layer_sizes[static_cast<std::size_t>(l) + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> draw(-bound, bound);
    const Eigen::Index n = static_cast<Eigen::Index>(fan_in) * fan_out + fan_out;
    for (Eigen::Index i = 0; i < n; ++i) params[at + i] = draw(rng);
    at += n;
  }
  return params;
}

Matrix<double> forward(const MlpArchitecture& arch, const ParamVector& params,
                       const Batch& batch) {
  check_shapes(arch, params, batch);
  Matrix<double> a = batch.features;
  Eigen::Index at = 0;
  for (int l = 0; l < arch.num_layers(); ++l) {
    const int in = arch.layer_sizes[static_cast<std::size_t>(l)];
    const int out = arch.layer_sizes[static_cast<std::size_t>(l) + 1];
    ConstMatrixMap w(params.data() + at, out, in);
    ConstVectorMap b(params.data() + at + static_cast<Eigen::Index>(out) * in,
                     out);
    at += static_cast<Eigen::Index>(out) * in + out;
    Matrix<double> z = a * w.transpose();
    z.rowwise() += b.transpose();
    a = (l + 1 < arch.num_layers()) ? activate(z, arch.activation) : z;
  }
  return a;
}

Matrix<double> softmax(const Matrix<double>& logits) {
  Matrix<double> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - peak).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

double loss(const MlpArchitecture& arch, const ParamVector& params,
            const Batch& batch) {
  return loss_ce(forward(arch, params, batch), batch.labels);
}

ParamVector grad(const MlpArchitecture& arch, const ParamVector& params,
                 const Batch& batch) {
  check_shapes(arch, params, batch);
  const int layers = arch.num_layers();
  std::vector<Matrix<double>> pre(static_cast<std::size_t>(layers));
  std::vector<Matrix<double>> post(static_cast<std::size_t>(layers) + 1);
  std::vector<Eigen::Index> offsets(static_cast<std::size_t>(layers));

  post[0] = batch.features;
  Eigen::Index at = 0;
  for (int l = 0; l < layers; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    const int in = arch.layer_sizes[ul];
    const int out = arch.layer_sizes[ul + 1];
    offsets[ul] = at;
    ConstMatrixMap w(params.data() + at, out, in);
    ConstVectorMap b(params.data() + at + static_cast<Eigen::Index>(out) * in,
                     out);
    at += static_cast<Eigen::Index>(out) * in + out;
    pre[ul] = post[ul] * w.transpose();
    pre[ul].rowwise() += b.transpose();
    post[ul + 1] = (l + 1 < layers) ? activate(pre[ul], arch.activation)
                                    : pre[ul];
  }

  const double n = static_cast<double>(batch.size());
  Matrix<double> delta = softmax(post.back());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    delta(i, batch.labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
  delta /= n;

  ParamVector gradient(params.size());
  for (int l = layers - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const int in = arch.layer_sizes[ul];
    const int out = arch.layer_sizes[ul + 1];
    MatrixMap dw(gradient.data() + offsets[ul], out, in);
    VectorMap db(gradient.data() + offsets[ul] +
                     static_cast<Eigen::Index>(out) * in,
                 out);
    dw.noalias() = delta.transpose() * post[ul];
    db = delta.colwise().sum().transpose();
    if (l > 0) {
      ConstMatrixMap w(params.data() + offsets[ul], out, in);
      Matrix<double> upstream = delta * w;
      delta = upstream.cwiseProduct(
          activation_slope(pre[ul - 1], post[ul], arch.activation));
    }
  }
  return gradient;
}

ParamVector grad_fd(const LossFn& loss_fn, const ParamVector& params,
                    double eps) {
  ParamVector gradient(params.size());
  ParamVector probe = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + eps;
    const double up = loss_fn(probe);
    probe[i] = params[i] - eps;
    const double down = loss_fn(probe);
    probe[i] = params[i];
    gradient[i] = (up - down) / (2.0 * eps);
  }
  return gradient;
}

ParamVector grad_fd(const MlpArchitecture& arch, const ParamVector& params,
                    const Batch& batch, double eps) {
  check_shapes(arch, params, batch);
  return grad_fd([&](const ParamVector& p) { return loss(arch, p, batch); },
                 params, eps);
}

OptimizerState OptimizerState::sgd(double learning_rate, Eigen::Index size) {
  OptimizerState state;
  state.kind = OptimizerKind::kSgd;
  state.learning_rate = learning_rate;
  state.first_moment = ParamVector::Zero(size);
  state.second_moment = ParamVector::Zero(size);
  return state;
}

OptimizerState OptimizerState::adam(double learning_rate, double beta1,
                                    double beta2, Eigen::Index size) {
  OptimizerState state;
  state.kind = OptimizerKind::kAdam;
  state.learning_rate = learning_rate;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.first_moment = ParamVector::Zero(size);
  state.second_moment = ParamVector::Zero(size);
  return state;
}

ParamVector optimizer_step(OptimizerState& state, const ParamVector& params,
                           const ParamVector& gradient) {
  if (params.size() != gradient.size() ||
      params.size() != state.first_moment.size()) {
    throw ConfigError("optimizer step: parameter, gradient and moment "
                      "lengths differ");
  }
  ++state.step_count;
  if (state.kind == OptimizerKind::kSgd) {
    return params - state.learning_rate * gradient;
  }
  state.first_moment =
      state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient;
  state.second_moment = state.beta2 * state.second_moment +
                        (1.0 - state.beta2) * gradient.cwiseAbs2();
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  ParamVector step =
      (state.first_moment.array() / correction1) /
      ((state.second_moment.array() / correction2).sqrt() + state.epsilon);
  return params - state.learning_rate * step;
}

ParamVector train_local(const MlpArchitecture& arch, ParamVector params,
                        const Batch& data, int epochs, int batch_size,
                        OptimizerState& optimizer, Rng& rng,
                        const GradientAdjust& adjust) {
  if (data.empty()) throw ConfigError("train_local: empty dataset");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (int epoch = 0; epoch < epochs; ++epoch) {
    fisher_yates(order, rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      const Batch mini = data.select(
          std::vector<Eigen::Index>(order.begin() + static_cast<long>(start),
                                    order.begin() + static_cast<long>(stop)));
      ParamVector gradient = grad(arch, params, mini);
      if (adjust) adjust(params, gradient);
      params = optimizer_step(optimizer, params, gradient);
    }
  }
  if (!all_finite(params)) {
    throw NumericError("training produced non-finite parameters");
  }
  return params;
}

bool all_finite(const ParamVector& params) { return params.allFinite(); }

}  // namespace fedsoup
