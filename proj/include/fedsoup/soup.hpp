#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "fedsoup/error.hpp"
#include "fedsoup/nn.hpp"

namespace fedsoup {

namespace detail {

// Rounding can push a mean one ulp outside the hull of its inputs; pull it
// back so identical inputs reproduce themselves exactly.
template <typename Scalar>
void clamp_to_hull(Vector<Scalar>& mean,
                   const std::vector<const Vector<Scalar>*>& inputs) {
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    Scalar lo = (*inputs.front())[j];
    Scalar hi = lo;
    for (const auto* v : inputs) {
      lo = std::min(lo, (*v)[j]);
      hi = std::max(hi, (*v)[j]);
    }
    mean[j] = std::clamp(mean[j], lo, hi);
  }
}

}  // namespace detail

// Weighted mean sum(w_i * theta_i) / sum(w_i). Uniform weights give FedAvg.
template <typename Scalar>
Vector<Scalar> aggregate(const std::vector<Vector<Scalar>>& params,
                         const std::vector<Scalar>& weights) {
  if (params.empty()) throw ConfigError("aggregate: no parameter vectors");
  if (params.size() != weights.size()) {
    throw ConfigError("aggregate: " + std::to_string(params.size()) +
                      " vectors but " + std::to_string(weights.size()) +
                      " weights");
  }
  const Eigen::Index n = params.front().size();
  Scalar total_weight = 0;
  std::vector<const Vector<Scalar>*> support;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != n) {
      throw ConfigError("aggregate: parameter vectors differ in length");
    }
    if (!(weights[i] >= 0)) {
      throw ConfigError("aggregate: weights must be non-negative");
    }
    total_weight += weights[i];
    if (weights[i] > 0) support.push_back(&params[i]);
  }
  if (!(total_weight > 0)) {
    throw ConfigError("aggregate: weights sum to zero");
  }
  Vector<Scalar> sum = Vector<Scalar>::Zero(n);
  for (std::size_t i = 0; i < params.size(); ++i) {
    sum += weights[i] * params[i];
  }
  Vector<Scalar> mean = sum / total_weight;
  detail::clamp_to_hull(mean, support);
  return mean;
}

template <typename Scalar>
Vector<Scalar> uniform_mean(const std::vector<const Vector<Scalar>*>& inputs) {
  if (inputs.empty()) throw ConfigError("average of an empty set");
  const Eigen::Index n = inputs.front()->size();
  Vector<Scalar> sum = Vector<Scalar>::Zero(n);
  for (const auto* v : inputs) {
    if (v->size() != n) {
      throw ConfigError("average: parameter vectors differ in length");
    }
    sum += *v;
  }
  Vector<Scalar> mean = sum / static_cast<Scalar>(inputs.size());
  detail::clamp_to_hull(mean, inputs);
  return mean;
}

struct SoupEntry {
  int round = 0;
  ParamVector params;
};

// Historical global checkpoints selected by one client.
class SoupSet {
 public:
  // Appends; rounds must strictly increase and lengths must match.
  void add(int round, ParamVector params);
  // Drops every entry and keeps only this one.
  void reset_to(int round, ParamVector params);

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<SoupEntry>& entries() const { return entries_; }
  std::vector<int> rounds() const;

 private:
  std::vector<SoupEntry> entries_;
};

enum class SoupMode { kAccumulate, kReplace };

std::string to_string(SoupMode mode);
SoupMode soup_mode_from_string(const std::string& name);

// Uniform mean over every soup entry and every extra:
// (theta_g^1 + ... + theta_g^k + extras...) / (k + |extras|).
ParamVector soup_average(const SoupSet& soup,
                         const std::vector<ParamVector>& extras);

// Fraction of argmax-correct predictions on a validation split.
double val_acc(const MlpArchitecture& arch, const ParamVector& params,
               const Batch& val);

struct SelectionOutcome {
  SoupSet soup;
  double acc_with_global = 0.0;     // ValAcc(avg(soup + local + global))
  double acc_without_global = 0.0;  // ValAcc(avg(soup + local))
  bool selected = false;
};

// Temporal model selection. The global checkpoint is admitted when adding it
// to the soup does not lower validation accuracy (ties admit).
SelectionOutcome maybe_select(SoupSet soup, int round,
                              const ParamVector& global_params,
                              const ParamVector& local_params,
                              const MlpArchitecture& arch, const Batch& val,
                              SoupMode mode);

// Federated model patching: average of the soup and the local model.
ParamVector patch(const SoupSet& soup, const ParamVector& local_params);

}  // namespace fedsoup
