#include "fedsoup/engine.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "fedsoup/error.hpp"

namespace fedsoup {

std::string to_string(Method method) {
  switch (method) {
    case Method::kFedAvg:
      return "fedavg";
    case Method::kFedProx:
      return "fedprox";
    case Method::kFedSoup:
      return "fedsoup";
    case Method::kLocalOnly:
      return "local_only";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "fedavg") return Method::kFedAvg;
  if (name == "fedprox") return Method::kFedProx;
  if (name == "fedsoup") return Method::kFedSoup;
  if (name == "local_only") return Method::kLocalOnly;
  throw ConfigError("unknown method '" + name + "'");
}

void FederatedConfig::validate() const {
  if (rounds < 1) throw ConfigError("training.rounds must be at least 1");
  if (local_epochs < 0) {
    throw ConfigError("training.local_epochs must be non-negative");
  }
  if (batch_size < 1) throw ConfigError("training.batch_size must be positive");
  if (!(learning_rate > 0.0)) {
    throw ConfigError("training.learning_rate must be positive");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("training.beta1 and training.beta2 must lie in (0, 1)");
  }
  if (!(fedprox_mu >= 0.0)) {
    throw ConfigError("training.fedprox_mu must be non-negative");
  }
  if (!(interpolation_start_fraction >= 0.0 &&
        interpolation_start_fraction <= 1.0)) {
    throw ConfigError(
        "training.interpolation_start_fraction must lie in [0, 1]");
  }
  if (method == Method::kFedSoup &&
      interpolation_start_fraction * rounds < 1.0) {
    throw ConfigError("training.interpolation_start_fraction * rounds must be "
                      "at least 1 for fedsoup");
  }
  for (int iters : fine_tune_iters) {
    if (iters < 0) {
      throw ConfigError("training.fine_tune_iters entries must be "
                        "non-negative");
    }
  }
}

int FederatedConfig::interpolation_start_round() const {
  return static_cast<int>(std::ceil(interpolation_start_fraction * rounds));
}

OptimizerState FederatedConfig::make_optimizer(Eigen::Index size) const {
  if (optimizer == OptimizerKind::kSgd) {
    return OptimizerState::sgd(learning_rate, size);
  }
  return OptimizerState::adam(learning_rate, beta1, beta2, size);
}

std::string checksum(const ParamVector& params) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(params.data());
  const std::size_t n = static_cast<std::size_t>(params.size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

GradientAdjust fedprox_adjust(const ParamVector& global_params, double mu) {
  return [&global_params, mu](const ParamVector& params,
                              ParamVector& gradient) {
    gradient += mu * (params - global_params);
  };
}

ParamVector client_update(ClientState& state, const ParamVector& global_params,
                          const MlpArchitecture& arch,
                          const FederatedConfig& cfg, int round) {
  if (state.data == nullptr || state.data->train.empty()) {
    throw ConfigError("client " + std::to_string(state.client_id) +
                      " has no training data");
  }
  Rng rng = make_stream(cfg.seed, StreamPurpose::kTrain,
                        {static_cast<std::uint64_t>(state.client_id),
                         static_cast<std::uint64_t>(round)});
  const ParamVector& start = cfg.method == Method::kLocalOnly
                                 ? state.local_params
                                 : global_params;
  // mu = 0 skips the hook entirely so the trajectory matches fedavg bit for
  // bit.
  GradientAdjust adjust;
  if (cfg.method == Method::kFedProx && cfg.fedprox_mu > 0.0) {
    adjust = fedprox_adjust(global_params, cfg.fedprox_mu);
  }
  return train_local(arch, start, state.data->train, cfg.local_epochs,
                     cfg.batch_size, state.optimizer, rng, adjust);
}

TrainingResult run_training(const FederationData& fed,
                            const MlpArchitecture& arch,
                            const FederatedConfig& cfg,
                            const RoundObserver& observer) {
  cfg.validate();
  arch.validate();
  if (fed.clients.size() < 2) {
    throw ConfigError("federation needs at least 2 clients");
  }

  Rng init_rng = make_stream(cfg.seed, StreamPurpose::kInit);
  const ParamVector init = init_params(arch, init_rng);

  TrainingResult result;
  result.clients.reserve(fed.clients.size());
  for (const auto& data : fed.clients) {
    ClientState state;
    state.client_id = data.client_id;
    state.data = &data;
    state.local_params = init;
    state.optimizer = cfg.make_optimizer(init.size());
    result.clients.push_back(std::move(state));
  }

  const int start_round = cfg.interpolation_start_round();
  const std::vector<double> weights(result.clients.size(), 1.0);
  std::vector<ParamVector> uploads(result.clients.size(), init);

  for (int round = 0; round < cfg.rounds; ++round) {
    result.global_params = aggregate(uploads, weights);
    ++result.aggregations;

    RoundRecord record;
    record.round = round;
    record.global_checksum = checksum(result.global_params);
    const bool soup_active =
        cfg.method == Method::kFedSoup && round >= start_round;

    for (std::size_t c = 0; c < result.clients.size(); ++c) {
      ClientState& state = result.clients[c];
      ParamVector local =
          client_update(state, result.global_params, arch, cfg, round);
      if (soup_active) {
        SelectionOutcome outcome =
            maybe_select(std::move(state.soup), round, result.global_params,
                         local, arch, state.data->val, cfg.soup_mode);
        state.soup = std::move(outcome.soup);
        record.selections.push_back({outcome.acc_with_global,
                                     outcome.acc_without_global,
                                     outcome.selected});
        local = patch(state.soup, local);
      }
      state.local_params = local;
      uploads[c] = std::move(local);
      record.val_accuracy.push_back(
          val_acc(arch, state.local_params, state.data->val));
      record.soup_sizes.push_back(state.soup.size());
    }

    if (observer) observer(record);
    result.records.push_back(std::move(record));
  }
  return result;
}

ParamVector fine_tune(const ParamVector& params, const ClientDataset& client,
                      int iters, const MlpArchitecture& arch,
                      const FederatedConfig& cfg) {
  if (iters < 0) throw ConfigError("fine_tune: iters must be non-negative");
  if (iters == 0) return params;
  OptimizerState optimizer = cfg.make_optimizer(params.size());
  Rng rng = make_stream(cfg.seed, StreamPurpose::kFineTune,
                        {static_cast<std::uint64_t>(client.client_id)});
  return train_local(arch, params, client.train, iters, cfg.batch_size,
                     optimizer, rng);
}

std::vector<ParamVector> personalized_models(const TrainingResult& result,
                                             Method method) {
  std::vector<ParamVector> models;
  models.reserve(result.clients.size());
  for (const auto& state : result.clients) {
    models.push_back(is_global_method(method) ? result.global_params
                                              : state.local_params);
  }
  return models;
}

}  // namespace fedsoup
