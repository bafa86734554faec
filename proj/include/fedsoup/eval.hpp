#pragma once

#include <optional>
#include <vector>

#include "fedsoup/data.hpp"
#include "fedsoup/engine.hpp"
#include "fedsoup/metrics.hpp"
#include "fedsoup/sharpness.hpp"

namespace fedsoup {

struct ClientMetrics {
  int client_id = 0;
  ScoreCard local;   // on the client's local_test
  ScoreCard global;  // on the federation's global_test
  std::vector<int> soup_rounds;
};

struct MeanScores {
  double accuracy = 0.0;
  std::optional<double> auc;
};

struct TradeoffRow {
  int iters = 0;
  MeanScores local;
  MeanScores global;
};

struct MetricsReport {
  Method method = Method::kFedAvg;
  std::uint64_t seed = 0;
  std::vector<ClientMetrics> clients;
  MeanScores local;
  MeanScores global;
};

// Arithmetic mean of the per-client cards; AUC only when every card has one.
MeanScores mean_scores(const std::vector<ScoreCard>& cards);

// Evaluates one model per client (see personalized_models): local metrics on
// the client's local_test, global metrics on fed.global_test.
MetricsReport evaluate_models(const std::vector<ParamVector>& models,
                              const FederationData& fed,
                              const MlpArchitecture& arch, Method method,
                              std::uint64_t seed);

MetricsReport evaluate_federation(const TrainingResult& result,
                                  const FederationData& fed,
                                  const MlpArchitecture& arch,
                                  const FederatedConfig& cfg);

// Fine-tunes copies of each client's model for every entry of
// cfg.fine_tune_iters and averages local and global scores.
std::vector<TradeoffRow> tradeoff_sweep(const TrainingResult& result,
                                        const FederationData& fed,
                                        const MlpArchitecture& arch,
                                        const FederatedConfig& cfg);

struct HoldoutMetrics {
  int holdout = 0;
  // Mean over the remaining clients' deployed models (headline).
  MeanScores personalized;
  // The final global model.
  ScoreCard global_model;
};

struct LeaveOneOutResult {
  Method method = Method::kFedAvg;
  std::vector<HoldoutMetrics> holdouts;
  MeanScores mean_personalized;
  MeanScores mean_global_model;
};

// Trains once per held-out client and scores on that client's whole pool.
LeaveOneOutResult leave_one_out_run(const ShiftSpec& spec,
                                    const MlpArchitecture& arch,
                                    const FederatedConfig& cfg);

struct ClientSharpness {
  int client_id = 0;
  SharpnessResult result;
};

// Sharpness of each client's model on that client's training split.
std::vector<ClientSharpness> client_sharpness(
    const std::vector<ParamVector>& models, const FederationData& fed,
    const MlpArchitecture& arch, const SharpnessConfig& cfg);

double mean_median_eigenvalue(const std::vector<ClientSharpness>& rows);

}  // namespace fedsoup
