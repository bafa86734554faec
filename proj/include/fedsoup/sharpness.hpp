#pragma once

#include <cstdint>
#include <vector>

#include "fedsoup/nn.hpp"

namespace fedsoup {

// Hessian-vector product by central differences of the gradient along the
// normalized direction, rescaled by ||v||.
ParamVector hvp(const GradFn& gradient, const ParamVector& params,
                const ParamVector& v, double eps = 1e-4);
ParamVector hvp(const MlpArchitecture& arch, const ParamVector& params,
                const Batch& batch, const ParamVector& v, double eps = 1e-4);

struct PowerIterationResult {
  double eigenvalue = 0.0;
  ParamVector eigenvector;
  int iterations = 0;
  bool converged = false;
};

// Dominant-in-magnitude eigenvalue of the Hessian via repeated HVPs from a
// random unit start. The estimate is the Rayleigh quotient, so the sign of a
// dominant negative curvature is preserved. Stops once successive estimates
// differ by at most tol * max(1, |lambda|).
PowerIterationResult power_iteration(const GradFn& gradient,
                                     const ParamVector& params, int max_iters,
                                     double tol, Rng& rng, double eps = 1e-4);
PowerIterationResult power_iteration(const MlpArchitecture& arch,
                                     const ParamVector& params,
                                     const Batch& batch, int max_iters,
                                     double tol, Rng& rng, double eps = 1e-4);

// Column i is (grad(theta + eps e_i) - grad(theta - eps e_i)) / (2 eps); not
// symmetrized.
Matrix<double> fd_hessian_raw(const GradFn& gradient, const ParamVector& params,
                              double eps);

inline constexpr Eigen::Index kDenseHessianMaxParams = 200;

// Symmetrized (H + H^T) / 2 of fd_hessian_raw. Refuses more than
// kDenseHessianMaxParams parameters.
Matrix<double> dense_hessian(const GradFn& gradient, const ParamVector& params,
                             double eps = 1e-4);
Matrix<double> dense_hessian(const MlpArchitecture& arch,
                             const ParamVector& params, const Batch& batch,
                             double eps = 1e-4);

// Largest-magnitude eigenvalue of a symmetric matrix (full eigensolve).
double dominant_eigenvalue(const Matrix<double>& symmetric);

struct SharpnessConfig {
  int batch_size = 16;
  int max_iters = 100;
  double tol = 1e-6;
  double eps = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SharpnessConfig&) const = default;
};

struct SharpnessResult {
  std::vector<double> per_batch_eigenvalues;
  double median_eigenvalue = 0.0;
  std::vector<int> iterations_used;
  std::vector<bool> converged_flags;
};

// Lower-of-two median for even counts.
double lower_median(std::vector<double> values);

// Splits the dataset into consecutive full batches (the partial tail is
// dropped) and runs power iteration on each. Every batch starts from the same
// seeded unit vector.
SharpnessResult sharpness_metric(const MlpArchitecture& arch,
                                 const ParamVector& params,
                                 const Batch& dataset,
                                 const SharpnessConfig& cfg);

}  // namespace fedsoup
