#include "fedsoup/sharpness.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedsoup/error.hpp"

namespace fedsoup {

namespace {

GradFn batch_gradient(const MlpArchitecture& arch, const Batch& batch) {
  return [&arch, &batch](const ParamVector& p) { return grad(arch, p, batch); };
}

}  // namespace

ParamVector hvp(const GradFn& gradient, const ParamVector& params,
                const ParamVector& v, double eps) {
  if (v.size() != params.size()) {
    throw ConfigError("hvp: direction and parameter lengths differ");
  }
  const double norm = v.norm();
  if (!(norm > 0.0)) throw ConfigError("hvp: zero direction vector");
  const ParamVector unit = v / norm;
  const ParamVector up = gradient(params + eps * unit);
  const ParamVector down = gradient(params - eps * unit);
  return (up - down) / (2.0 * eps) * norm;
}

ParamVector hvp(const MlpArchitecture& arch, const ParamVector& params,
                const Batch& batch, const ParamVector& v, double eps) {
  return hvp(batch_gradient(arch, batch), params, v, eps);
}

PowerIterationResult power_iteration(const GradFn& gradient,
                                     const ParamVector& params, int max_iters,
                                     double tol, Rng& rng, double eps) {
  if (max_iters < 1) throw ConfigError("power_iteration: max_iters < 1");
  if (!(tol > 0.0)) throw ConfigError("power_iteration: tol must be positive");

  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector v(params.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  v.normalize();

  PowerIterationResult out;
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int t = 1; t <= max_iters; ++t) {
    const ParamVector hv = hvp(gradient, params, v, eps);
    const double lambda = v.dot(hv);
    if (!std::isfinite(lambda)) {
      throw NumericError("power_iteration: non-finite Rayleigh quotient");
    }
    out.eigenvalue = lambda;
    out.iterations = t;
    const double hv_norm = hv.norm();
    if (hv_norm == 0.0) {
      // v lies in the null space; the zero eigenvalue is exact.
      out.eigenvector = v;
      out.converged = true;
      return out;
    }
    v = hv / hv_norm;
    if (t > 1 &&
        std::abs(lambda - previous) <= tol * std::max(1.0, std::abs(lambda))) {
      out.converged = true;
      break;
    }
    previous = lambda;
  }
  out.eigenvector = v;
  return out;
}

PowerIterationResult power_iteration(const MlpArchitecture& arch,
                                     const ParamVector& params,
                                     const Batch& batch, int max_iters,
                                     double tol, Rng& rng, double eps) {
  return power_iteration(batch_gradient(arch, batch), params, max_iters, tol,
                         rng, eps);
}

Matrix<double> fd_hessian_raw(const GradFn& gradient, const ParamVector& params,
                              double eps) {
  const Eigen::Index p = params.size();
  if (p > kDenseHessianMaxParams) {
    throw ConfigError("dense Hessian refused for " + std::to_string(p) +
                      " parameters (limit " +
                      std::to_string(kDenseHessianMaxParams) + ")");
  }
  Matrix<double> h(p, p);
  ParamVector probe = params;
  for (Eigen::Index i = 0; i < p; ++i) {
    probe[i] = params[i] + eps;
    const ParamVector up = gradient(probe);
    probe[i] = params[i] - eps;
    const ParamVector down = gradient(probe);
    probe[i] = params[i];
    h.col(i) = (up - down) / (2.0 * eps);
  }
  return h;
}

Matrix<double> dense_hessian(const GradFn& gradient, const ParamVector& params,
                             double eps) {
  const Matrix<double> raw = fd_hessian_raw(gradient, params, eps);
  return 0.5 * (raw + raw.transpose());
}

Matrix<double> dense_hessian(const MlpArchitecture& arch,
                             const ParamVector& params, const Batch& batch,
                             double eps) {
  arch.validate();
  if (arch.param_count() > kDenseHessianMaxParams) {
    throw ConfigError("dense Hessian refused for " +
                      std::to_string(arch.param_count()) + " parameters");
  }
  return dense_hessian(batch_gradient(arch, batch), params, eps);
}

double dominant_eigenvalue(const Matrix<double>& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix<double>> solver(symmetric,
                                                       Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericError("symmetric eigensolve failed");
  }
  const auto& values = solver.eigenvalues();
  const double lo = values[0];
  const double hi = values[values.size() - 1];
  return std::abs(lo) > std::abs(hi) ? lo : hi;
}

void SharpnessConfig::validate() const {
  if (batch_size < 1) throw ConfigError("sharpness.batch_size must be positive");
  if (max_iters < 1) throw ConfigError("sharpness.max_iters must be positive");
  if (!(tol > 0.0)) throw ConfigError("sharpness.tol must be positive");
  if (!(eps > 0.0)) throw ConfigError("sharpness.eps must be positive");
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty list");
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid),
                   values.end());
  return values[mid];
}

SharpnessResult sharpness_metric(const MlpArchitecture& arch,
                                 const ParamVector& params,
                                 const Batch& dataset,
                                 const SharpnessConfig& cfg) {
  cfg.validate();
  const Eigen::Index full_batches = dataset.size() / cfg.batch_size;
  if (full_batches < 1) {
    throw ConfigError("sharpness needs at least one full batch of " +
                      std::to_string(cfg.batch_size) + " samples, got " +
                      std::to_string(dataset.size()));
  }
  SharpnessResult result;
  for (Eigen::Index b = 0; b < full_batches; ++b) {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(cfg.batch_size));
    std::iota(rows.begin(), rows.end(), b * cfg.batch_size);
    const Batch batch = dataset.select(rows);
    Rng rng = make_stream(cfg.seed, StreamPurpose::kSharpness);
    const auto power = power_iteration(arch, params, batch, cfg.max_iters,
                                       cfg.tol, rng, cfg.eps);
    result.per_batch_eigenvalues.push_back(power.eigenvalue);
    result.iterations_used.push_back(power.iterations);
    result.converged_flags.push_back(power.converged);
  }
  result.median_eigenvalue = lower_median(result.per_batch_eigenvalues);
  return result;
}

}  // namespace fedsoup
