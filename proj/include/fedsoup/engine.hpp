#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedsoup/data.hpp"
#include "fedsoup/nn.hpp"
#include "fedsoup/soup.hpp"

namespace fedsoup {

enum class Method { kFedAvg, kFedProx, kFedSoup, kLocalOnly };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

// Methods whose evaluated model is the shared global one.
inline bool is_global_method(Method method) {
  return method == Method::kFedAvg || method == Method::kFedProx;
}

struct FederatedConfig {
  Method method = Method::kFedAvg;
  int rounds = 200;
  int local_epochs = 1;
  int batch_size = 16;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double fedprox_mu = 0.01;
  double interpolation_start_fraction = 0.75;
  SoupMode soup_mode = SoupMode::kAccumulate;
  std::uint64_t seed = 0;
  std::vector<int> fine_tune_iters = {1, 7, 15};

  void validate() const;
  // First round (0-based) in which selection and patching run.
  int interpolation_start_round() const;
  OptimizerState make_optimizer(Eigen::Index size) const;

  bool operator==(const FederatedConfig&) const = default;
};

struct ClientState {
  int client_id = 0;
  const ClientDataset* data = nullptr;
  ParamVector local_params;
  SoupSet soup;
  OptimizerState optimizer;
};

struct SelectionLog {
  double acc_with_global = 0.0;
  double acc_without_global = 0.0;
  bool selected = false;
};

struct RoundRecord {
  int round = 0;
  std::vector<double> val_accuracy;  // per client, after this round's update
  std::vector<std::size_t> soup_sizes;
  std::string global_checksum;
  // Per client; empty before the interpolation start round.
  std::vector<SelectionLog> selections;
};

struct TrainingResult {
  std::vector<ClientState> clients;
  ParamVector global_params;
  std::vector<RoundRecord> records;
  // Number of server aggregations performed.
  int aggregations = 0;
};

using RoundObserver = std::function<void(const RoundRecord&)>;

// FNV-1a over the raw bytes, as 16 hex digits.
std::string checksum(const ParamVector& params);

// Adds mu * (theta - theta_g), the gradient of (mu / 2) * ||theta - theta_g||^2.
// `global_params` must outlive the returned hook.
GradientAdjust fedprox_adjust(const ParamVector& global_params, double mu);

// One round of local work for one client, starting from the global model
// (or from its own model for local-only training).
ParamVector client_update(ClientState& state, const ParamVector& global_params,
                          const MlpArchitecture& arch,
                          const FederatedConfig& cfg, int round);

// Runs cfg.rounds rounds of aggregate -> local update -> (select, patch).
// The federation must outlive the returned client states.
TrainingResult run_training(const FederationData& fed,
                            const MlpArchitecture& arch,
                            const FederatedConfig& cfg,
                            const RoundObserver& observer = {});

// `iters` epochs of local training on client.train with a fresh optimizer.
ParamVector fine_tune(const ParamVector& params, const ClientDataset& client,
                      int iters, const MlpArchitecture& arch,
                      const FederatedConfig& cfg);

// The model each client would deploy after training.
std::vector<ParamVector> personalized_models(const TrainingResult& result,
                                             Method method);

}  // namespace fedsoup
