#pragma once

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedsoup/data.hpp"
#include "fedsoup/engine.hpp"
#include "fedsoup/eval.hpp"
#include "fedsoup/sharpness.hpp"

namespace fedsoup {

using json = nlohmann::json;

struct OutputPaths {
  std::string directory = "out";
  std::optional<std::string> trace;

  bool operator==(const OutputPaths&) const = default;
};

// Fully resolved experiment. `training.method` is ignored; every entry of
// `methods` is trained with otherwise identical settings.
struct ExperimentSpec {
  ShiftSpec data;
  std::vector<int> hidden_layers = {16};
  Activation activation = Activation::kRelu;
  FederatedConfig training;
  SharpnessConfig sharpness;
  std::vector<Method> methods;
  OutputPaths outputs;

  MlpArchitecture architecture() const;
  FederatedConfig config_for(Method method) const;
  void validate() const;

  bool operator==(const ExperimentSpec&) const = default;
};

// Strict: unknown keys and wrong types raise ConfigError naming the key.
// Only `methods` is required.
ExperimentSpec parse_config(const json& doc);
ExperimentSpec parse_config_file(const std::filesystem::path& path);

// Every field, defaults expanded. parse_config(to_json(s)) == s.
json to_json(const ExperimentSpec& spec);

json to_json(const ScoreCard& card);
json to_json(const MeanScores& scores);
json to_json(const MetricsReport& report);
json to_json(const RoundRecord& record);
json to_json(const SharpnessResult& result);
json to_json(const Batch& batch);
json to_json(const FederationData& fed);

// Canonical report bodies: deterministic functions of the spec.
json run_body(const ExperimentSpec& spec);
// Same body; `on_round` sees every RoundRecord of every method.
json run_body_traced(
    const ExperimentSpec& spec,
    const std::function<void(Method, const RoundRecord&)>& on_round);
json tradeoff_body(const ExperimentSpec& spec);
json loo_body(const ExperimentSpec& spec);
json sharpness_body(const ExperimentSpec& spec, int fine_tune_iters);

struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> trace;
};

// Applies --seed / --trace overrides.
ExperimentSpec apply_overrides(ExperimentSpec spec, const CommandOptions& opts);

// Each command writes its files under spec.outputs.directory:
//   run        report.json, table1.csv (+ trace.jsonl when tracing)
//   tradeoff   report.json, tradeoff.csv
//   loo        report.json, loo.csv
//   sharpness  report.json, sharpness.csv
//   export-data federation.json
// report.json holds {"canonical": ..., "envelope": ...}; only the envelope
// carries wall-clock data.
void cmd_run(const ExperimentSpec& spec);
void cmd_tradeoff(const ExperimentSpec& spec);
void cmd_loo(const ExperimentSpec& spec);
void cmd_sharpness(const ExperimentSpec& spec, int fine_tune_iters);
void cmd_export_data(const ExperimentSpec& spec, std::optional<int> holdout,
                     const std::optional<std::string>& path);

// Shortest round-trip decimal form, '.' separator.
std::string format_number(double value);

}  // namespace fedsoup
