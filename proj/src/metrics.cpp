#include "fedsoup/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

#include "fedsoup/error.hpp"

namespace fedsoup {

std::vector<int> predict(const Matrix<double>& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const MlpArchitecture& arch, const ParamVector& params,
                const Batch& batch) {
  if (batch.empty()) throw ConfigError("accuracy: empty batch");
  const auto predicted = predict(forward(arch, params, batch));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

double auc_binary(const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ConfigError("auc_binary: score and label counts differ");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Twice the Mann-Whitney U, kept integral so ties stay exact.
  std::uint64_t twice_u = 0;
  std::uint64_t negatives_below = 0;
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      const int label = labels[order[j]];
      if (label == 1) {
        ++pos;
      } else if (label == 0) {
        ++neg;
      } else {
        throw ConfigError("auc_binary: labels must be 0 or 1");
      }
      ++j;
    }
    twice_u += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    positives += pos;
    negatives += neg;
    i = j;
  }
  if (positives == 0 || negatives == 0) {
    throw MetricError("AUC undefined: only one class present");
  }
  return static_cast<double>(twice_u) /
         static_cast<double>(2 * positives * negatives);
}

std::vector<double> positive_scores(const MlpArchitecture& arch,
                                    const ParamVector& params,
                                    const Batch& batch) {
  const Matrix<double> probs = softmax(forward(arch, params, batch));
  std::vector<double> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = probs(i, 1);
  }
  return out;
}

ScoreCard score(const MlpArchitecture& arch, const ParamVector& params,
                const Batch& batch) {
  ScoreCard card;
  card.accuracy = accuracy(arch, params, batch);
  if (arch.class_count() == 2) {
    const bool has0 = std::count(batch.labels.begin(), batch.labels.end(), 0);
    const bool has1 = std::count(batch.labels.begin(), batch.labels.end(), 1);
    if (has0 && has1) {
      card.auc = auc_binary(positive_scores(arch, params, batch), batch.labels);
    }
  }
  return card;
}

}  // namespace fedsoup
