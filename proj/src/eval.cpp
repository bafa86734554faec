#include "fedsoup/eval.hpp"

#include "fedsoup/error.hpp"

namespace fedsoup {

MeanScores mean_scores(const std::vector<ScoreCard>& cards) {
  if (cards.empty()) throw ConfigError("mean of zero score cards");
  MeanScores out;
  double acc = 0.0;
  double auc = 0.0;
  bool all_auc = true;
  for (const auto& card : cards) {
    acc += card.accuracy;
    if (card.auc) {
      auc += *card.auc;
    } else {
      all_auc = false;
    }
  }
  const double n = static_cast<double>(cards.size());
  out.accuracy = acc / n;
  if (all_auc) out.auc = auc / n;
  return out;
}

MetricsReport evaluate_models(const std::vector<ParamVector>& models,
                              const FederationData& fed,
                              const MlpArchitecture& arch, Method method,
                              std::uint64_t seed) {
  if (models.size() != fed.clients.size()) {
    throw ConfigError("one model per client required");
  }
  MetricsReport report;
  report.method = method;
  report.seed = seed;
  std::vector<ScoreCard> local;
  std::vector<ScoreCard> global;
  for (std::size_t c = 0; c < models.size(); ++c) {
    ClientMetrics row;
    row.client_id = fed.clients[c].client_id;
    row.local = score(arch, models[c], fed.clients[c].local_test);
    row.global = score(arch, models[c], fed.global_test);
    local.push_back(row.local);
    global.push_back(row.global);
    report.clients.push_back(std::move(row));
  }
  report.local = mean_scores(local);
  report.global = mean_scores(global);
  return report;
}

MetricsReport evaluate_federation(const TrainingResult& result,
                                  const FederationData& fed,
                                  const MlpArchitecture& arch,
                                  const FederatedConfig& cfg) {
  MetricsReport report =
      evaluate_models(personalized_models(result, cfg.method), fed, arch,
                      cfg.method, cfg.seed);
  for (std::size_t c = 0; c < report.clients.size(); ++c) {
    report.clients[c].soup_rounds = result.clients[c].soup.rounds();
  }
  return report;
}

std::vector<TradeoffRow> tradeoff_sweep(const TrainingResult& result,
                                        const FederationData& fed,
                                        const MlpArchitecture& arch,
                                        const FederatedConfig& cfg) {
  if (cfg.fine_tune_iters.empty()) {
    throw ConfigError("training.fine_tune_iters is empty");
  }
  const auto models = personalized_models(result, cfg.method);
  std::vector<TradeoffRow> rows;
  for (int iters : cfg.fine_tune_iters) {
    std::vector<ParamVector> tuned;
    tuned.reserve(models.size());
    for (std::size_t c = 0; c < models.size(); ++c) {
      tuned.push_back(fine_tune(models[c], fed.clients[c], iters, arch, cfg));
    }
    const MetricsReport report =
        evaluate_models(tuned, fed, arch, cfg.method, cfg.seed);
    rows.push_back({iters, report.local, report.global});
  }
  return rows;
}

LeaveOneOutResult leave_one_out_run(const ShiftSpec& spec,
                                    const MlpArchitecture& arch,
                                    const FederatedConfig& cfg) {
  if (spec.n_clients < 3) {
    throw ConfigError("leave-one-out needs at least 3 clients");
  }
  LeaveOneOutResult out;
  out.method = cfg.method;
  std::vector<ScoreCard> personalized_means;
  std::vector<ScoreCard> global_cards;
  for (int h = 0; h < spec.n_clients; ++h) {
    const FederationData fed = generate_federation(spec, h, cfg.seed);
    const TrainingResult trained = run_training(fed, arch, cfg);
    const Batch unseen = fed.unseen_client->pool();

    std::vector<ScoreCard> cards;
    for (const auto& model : personalized_models(trained, cfg.method)) {
      cards.push_back(score(arch, model, unseen));
    }
    HoldoutMetrics row;
    row.holdout = h;
    row.personalized = mean_scores(cards);
    row.global_model = score(arch, trained.global_params, unseen);
    personalized_means.push_back({row.personalized.accuracy,
                                  row.personalized.auc});
    global_cards.push_back(row.global_model);
    out.holdouts.push_back(row);
  }
  out.mean_personalized = mean_scores(personalized_means);
  out.mean_global_model = mean_scores(global_cards);
  return out;
}

std::vector<ClientSharpness> client_sharpness(
    const std::vector<ParamVector>& models, const FederationData& fed,
    const MlpArchitecture& arch, const SharpnessConfig& cfg) {
  if (models.size() != fed.clients.size()) {
    throw ConfigError("one model per client required");
  }
  std::vector<ClientSharpness> rows;
  for (std::size_t c = 0; c < models.size(); ++c) {
    rows.push_back({fed.clients[c].client_id,
                    sharpness_metric(arch, models[c], fed.clients[c].train,
                                     cfg)});
  }
  return rows;
}

double mean_median_eigenvalue(const std::vector<ClientSharpness>& rows) {
  if (rows.empty()) throw ConfigError("no sharpness rows");
  double total = 0.0;
  for (const auto& row : rows) total += row.result.median_eigenvalue;
  return total / static_cast<double>(rows.size());
}

}  // namespace fedsoup
