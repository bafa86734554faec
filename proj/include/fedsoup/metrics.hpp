#pragma once

#include <optional>
#include <vector>

#include "fedsoup/nn.hpp"

namespace fedsoup {

// Argmax per row, ties resolved to the lowest class index.
std::vector<int> predict(const Matrix<double>& logits);

double accuracy(const MlpArchitecture& arch, const ParamVector& params,
                const Batch& batch);

// Mann-Whitney statistic: share of (positive, negative) pairs ranked
// correctly, ties counting one half. Throws MetricError unless both classes
// are present.
double auc_binary(const std::vector<double>& scores,
                  const std::vector<int>& labels);

// Softmax probability of class 1 for every row.
std::vector<double> positive_scores(const MlpArchitecture& arch,
                                    const ParamVector& params,
                                    const Batch& batch);

struct ScoreCard {
  double accuracy = 0.0;
  // Binary tasks with both classes present only.
  std::optional<double> auc;
};

ScoreCard score(const MlpArchitecture& arch, const ParamVector& params,
                const Batch& batch);

}  // namespace fedsoup
