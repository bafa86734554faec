#include "fedsoup/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "fedsoup/error.hpp"

namespace fedsoup {

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// anything left over can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string prefix)
      : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) {
      throw ConfigError("'" + display("") + "' must be a JSON object");
    }
  }

  const json* take(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) type_error(key, "an integer");
      out = v->get<int>();
    }
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer() ||
          (v->is_number_integer() && !v->is_number_unsigned() &&
           v->get<std::int64_t>() < 0)) {
        type_error(key, "a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string& key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) type_error(key, "a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) type_error(key, "a string");
      out = v->get<std::string>();
    }
  }

  void read(const std::string& key, std::vector<int>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) type_error(key, "an array of integers");
      out.clear();
      for (const auto& item : *v) {
        if (!item.is_number_integer()) type_error(key, "an array of integers");
        out.push_back(item.get<int>());
      }
    }
  }

  std::string display(const std::string& key) const {
    if (prefix_.empty()) return key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  // Throws on the first key that was never read.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown key '" + display(it.key()) + "'");
      }
    }
  }

  [[noreturn]] void type_error(const std::string& key,
                               const std::string& what) const {
    throw ConfigError("key '" + display(key) + "' must be " + what);
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto with_key(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

void parse_data(const json& doc, ShiftSpec& data) {
  ObjectReader r(doc, "data");
  r.read("n_clients", data.n_clients);
  r.read("samples_per_client", data.samples_per_client);
  r.read("input_dim", data.input_dim);
  r.read("class_count", data.class_count);
  r.read("rotation_step", data.rotation_step);
  r.read("mean_shift_step", data.mean_shift_step);
  r.read("label_noise", data.label_noise);
  r.read("class_separation", data.class_separation);
  r.read("cluster_std_major", data.cluster_std_major);
  r.read("cluster_std_minor", data.cluster_std_minor);
  r.read("global_test_per_client", data.global_test_per_client);
  if (const json* split = r.take("split")) {
    if (!split->is_array() || split->size() != 3) {
      r.type_error("split", "an array of three numbers");
    }
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*split)[i].is_number()) {
        r.type_error("split", "an array of three numbers");
      }
      data.split[i] = (*split)[i].get<double>();
    }
  }
  r.finish();
}

void parse_model(const json& doc, ExperimentSpec& spec) {
  ObjectReader r(doc, "model");
  r.read("hidden_layers", spec.hidden_layers);
  std::string activation = to_string(spec.activation);
  r.read("activation", activation);
  spec.activation = with_key("model.activation",
                             [&] { return activation_from_string(activation); });
  r.finish();
}

void parse_sharpness(const json& doc, SharpnessConfig& cfg) {
  ObjectReader r(doc, "training.sharpness");
  r.read("batch_size", cfg.batch_size);
  r.read("max_iters", cfg.max_iters);
  r.read("tol", cfg.tol);
  r.read("eps", cfg.eps);
  r.finish();
}

void parse_training(const json& doc, ExperimentSpec& spec) {
  FederatedConfig& cfg = spec.training;
  ObjectReader r(doc, "training");
  r.read("rounds", cfg.rounds);
  r.read("local_epochs", cfg.local_epochs);
  r.read("batch_size", cfg.batch_size);
  r.read("learning_rate", cfg.learning_rate);
  std::string optimizer = cfg.optimizer == OptimizerKind::kAdam ? "adam" : "sgd";
  r.read("optimizer", optimizer);
  if (optimizer == "adam") {
    cfg.optimizer = OptimizerKind::kAdam;
  } else if (optimizer == "sgd") {
    cfg.optimizer = OptimizerKind::kSgd;
  } else {
    throw ConfigError("key 'training.optimizer': unknown optimizer '" +
                      optimizer + "'");
  }
  r.read("beta1", cfg.beta1);
  r.read("beta2", cfg.beta2);
  r.read("fedprox_mu", cfg.fedprox_mu);
  r.read("interpolation_start_fraction", cfg.interpolation_start_fraction);
  std::string mode = to_string(cfg.soup_mode);
  r.read("soup_mode", mode);
  cfg.soup_mode = with_key("training.soup_mode",
                           [&] { return soup_mode_from_string(mode); });
  r.read("seed", cfg.seed);
  r.read("fine_tune_iters", cfg.fine_tune_iters);
  if (const json* sharp = r.take("sharpness")) {
    parse_sharpness(*sharp, spec.sharpness);
  }
  r.finish();
}

void parse_outputs(const json& doc, OutputPaths& out) {
  ObjectReader r(doc, "outputs");
  r.read("directory", out.directory);
  if (const json* trace = r.take("trace")) {
    if (trace->is_null()) {
      out.trace.reset();
    } else if (trace->is_string()) {
      out.trace = trace->get<std::string>();
    } else {
      r.type_error("trace", "a string or null");
    }
  }
  r.finish();
}

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::filesystem::path output_dir(const ExperimentSpec& spec) {
  std::filesystem::path dir(spec.outputs.directory);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw ConfigError("cannot create output directory '" + dir.string() +
                      "': " + ec.message());
  }
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

void write_report(const ExperimentSpec& spec, const std::string& command,
                  json body,
                  std::chrono::steady_clock::time_point started) {
  json report;
  body["command"] = command;
  report["canonical"] = std::move(body);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  report["envelope"] = {{"generated_at", timestamp_utc()},
                        {"duration_seconds", seconds}};
  write_text(output_dir(spec) / "report.json", report.dump(2) + "\n");
}

json optional_number(const std::optional<double>& value) {
  return value ? json(*value) : json(nullptr);
}

std::vector<Method> methods_or_throw(const ExperimentSpec& spec) {
  if (spec.methods.empty()) throw ConfigError("methods must be non-empty");
  return spec.methods;
}

}  // namespace

MlpArchitecture ExperimentSpec::architecture() const {
  MlpArchitecture arch;
  arch.layer_sizes.push_back(data.input_dim);
  arch.layer_sizes.insert(arch.layer_sizes.end(), hidden_layers.begin(),
                          hidden_layers.end());
  arch.layer_sizes.push_back(data.class_count);
  arch.activation = activation;
  return arch;
}

FederatedConfig ExperimentSpec::config_for(Method method) const {
  FederatedConfig cfg = training;
  cfg.method = method;
  return cfg;
}

void ExperimentSpec::validate() const {
  data.validate();
  architecture().validate();
  if (methods.empty()) throw ConfigError("key 'methods' must be non-empty");
  for (Method m : methods) config_for(m).validate();
  sharpness.validate();
  if (outputs.directory.empty()) {
    throw ConfigError("key 'outputs.directory' must be non-empty");
  }
}

ExperimentSpec parse_config(const json& doc) {
  ExperimentSpec spec;
  ObjectReader r(doc, "");
  if (const json* data = r.take("data")) parse_data(*data, spec.data);
  if (const json* model = r.take("model")) parse_model(*model, spec);
  if (const json* training = r.take("training")) parse_training(*training, spec);
  const json* methods = r.take("methods");
  if (methods == nullptr) throw ConfigError("missing required key 'methods'");
  if (!methods->is_array()) r.type_error("methods", "an array of method names");
  for (const auto& m : *methods) {
    if (!m.is_string()) r.type_error("methods", "an array of method names");
    spec.methods.push_back(with_key(
        "methods", [&] { return method_from_string(m.get<std::string>()); }));
  }
  if (const json* outputs = r.take("outputs")) {
    parse_outputs(*outputs, spec.outputs);
  }
  r.finish();
  spec.sharpness.seed = spec.training.seed;
  spec.validate();
  return spec;
}

ExperimentSpec parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config '" + path.string() + "': " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentSpec& spec) {
  const ShiftSpec& d = spec.data;
  const FederatedConfig& t = spec.training;
  json methods = json::array();
  for (Method m : spec.methods) methods.push_back(to_string(m));
  return {
      {"data",
       {{"n_clients", d.n_clients},
        {"samples_per_client", d.samples_per_client},
        {"input_dim", d.input_dim},
        {"class_count", d.class_count},
        {"rotation_step", d.rotation_step},
        {"mean_shift_step", d.mean_shift_step},
        {"label_noise", d.label_noise},
        {"class_separation", d.class_separation},
        {"cluster_std_major", d.cluster_std_major},
        {"cluster_std_minor", d.cluster_std_minor},
        {"global_test_per_client", d.global_test_per_client},
        {"split", {d.split[0], d.split[1], d.split[2]}}}},
      {"model",
       {{"hidden_layers", spec.hidden_layers},
        {"activation", to_string(spec.activation)}}},
      {"training",
       {{"rounds", t.rounds},
        {"local_epochs", t.local_epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"optimizer", t.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"fedprox_mu", t.fedprox_mu},
        {"interpolation_start_fraction", t.interpolation_start_fraction},
        {"soup_mode", to_string(t.soup_mode)},
        {"seed", t.seed},
        {"fine_tune_iters", t.fine_tune_iters},
        {"sharpness",
         {{"batch_size", spec.sharpness.batch_size},
          {"max_iters", spec.sharpness.max_iters},
          {"tol", spec.sharpness.tol},
          {"eps", spec.sharpness.eps}}}}},
      {"methods", methods},
      {"outputs",
       {{"directory", spec.outputs.directory},
        {"trace", spec.outputs.trace ? json(*spec.outputs.trace)
                                     : json(nullptr)}}},
  };
}

json to_json(const ScoreCard& card) {
  return {{"accuracy", card.accuracy}, {"auc", optional_number(card.auc)}};
}

json to_json(const MeanScores& scores) {
  return {{"accuracy", scores.accuracy}, {"auc", optional_number(scores.auc)}};
}

json to_json(const MetricsReport& report) {
  json clients = json::array();
  for (const auto& c : report.clients) {
    clients.push_back({{"client_id", c.client_id},
                       {"local", to_json(c.local)},
                       {"global", to_json(c.global)},
                       {"soup_rounds", c.soup_rounds}});
  }
  return {{"method", to_string(report.method)},
          {"seed", report.seed},
          {"clients", clients},
          {"local", to_json(report.local)},
          {"global", to_json(report.global)}};
}

json to_json(const RoundRecord& record) {
  json selections = json::array();
  for (const auto& s : record.selections) {
    selections.push_back({{"acc_with_global", s.acc_with_global},
                          {"acc_without_global", s.acc_without_global},
                          {"selected", s.selected}});
  }
  return {{"round", record.round},
          {"val_accuracy", record.val_accuracy},
          {"soup_sizes", record.soup_sizes},
          {"global_checksum", record.global_checksum},
          {"selections", selections}};
}

json to_json(const SharpnessResult& result) {
  return {{"per_batch_eigenvalues", result.per_batch_eigenvalues},
          {"median_eigenvalue", result.median_eigenvalue},
          {"iterations_used", result.iterations_used},
          {"converged_flags", result.converged_flags}};
}

json to_json(const Batch& batch) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < batch.features.cols(); ++j) {
      row.push_back(batch.features(i, j));
    }
    rows.push_back(std::move(row));
  }
  return {{"features", rows}, {"labels", batch.labels}};
}

namespace {

json client_json(const ClientDataset& client) {
  std::vector<double> offset(client.source.mean_offset.data(),
                             client.source.mean_offset.data() +
                                 client.source.mean_offset.size());
  return {{"client_id", client.client_id},
          {"source",
           {{"mean_offset", offset},
            {"rotation", client.source.rotation},
            {"noise_scale", client.source.noise_scale}}},
          {"train", to_json(client.train)},
          {"val", to_json(client.val)},
          {"local_test", to_json(client.local_test)}};
}

}  // namespace

json to_json(const FederationData& fed) {
  json clients = json::array();
  for (const auto& c : fed.clients) clients.push_back(client_json(c));
  json global = to_json(fed.global_test);
  global["sources"] = fed.global_test_sources;
  return {{"clients", clients},
          {"global_test", global},
          {"unseen_client", fed.unseen_client
                                ? client_json(*fed.unseen_client)
                                : json(nullptr)}};
}

std::string format_number(double value) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

ExperimentSpec apply_overrides(ExperimentSpec spec, const CommandOptions& opts) {
  if (opts.seed) {
    spec.training.seed = *opts.seed;
    spec.sharpness.seed = *opts.seed;
  }
  if (opts.trace) spec.outputs.trace = *opts.trace;
  spec.validate();
  return spec;
}

json run_body(const ExperimentSpec& spec) {
  return run_body_traced(spec, {});
}

json run_body_traced(const ExperimentSpec& spec,
                     const std::function<void(Method, const RoundRecord&)>&
                         on_round) {
  const MlpArchitecture arch = spec.architecture();
  const FederationData fed =
      generate_federation(spec.data, std::nullopt, spec.training.seed);
  json results = json::array();
  for (Method method : methods_or_throw(spec)) {
    const FederatedConfig cfg = spec.config_for(method);
    RoundObserver observer;
    if (on_round) {
      observer = [&on_round, method](const RoundRecord& r) {
        on_round(method, r);
      };
    }
    const TrainingResult trained = run_training(fed, arch, cfg, observer);
    results.push_back(to_json(evaluate_federation(trained, fed, arch, cfg)));
  }
  return {{"config", to_json(spec)}, {"results", results}};
}

json tradeoff_body(const ExperimentSpec& spec) {
  const MlpArchitecture arch = spec.architecture();
  const FederationData fed =
      generate_federation(spec.data, std::nullopt, spec.training.seed);
  json tables = json::array();
  for (Method method : methods_or_throw(spec)) {
    const FederatedConfig cfg = spec.config_for(method);
    const TrainingResult trained = run_training(fed, arch, cfg);
    json rows = json::array();
    for (const auto& row : tradeoff_sweep(trained, fed, arch, cfg)) {
      rows.push_back({{"fine_tune_iters", row.iters},
                      {"local", to_json(row.local)},
                      {"global", to_json(row.global)}});
    }
    tables.push_back({{"method", to_string(method)}, {"rows", rows}});
  }
  return {{"config", to_json(spec)}, {"tradeoff", tables}};
}

json loo_body(const ExperimentSpec& spec) {
  const MlpArchitecture arch = spec.architecture();
  json tables = json::array();
  for (Method method : methods_or_throw(spec)) {
    const LeaveOneOutResult loo =
        leave_one_out_run(spec.data, arch, spec.config_for(method));
    json rows = json::array();
    for (const auto& h : loo.holdouts) {
      rows.push_back({{"holdout", h.holdout},
                      {"unseen", to_json(h.personalized)},
                      {"global_model", to_json(h.global_model)}});
    }
    tables.push_back({{"method", to_string(method)},
                      {"holdouts", rows},
                      {"mean_unseen", to_json(loo.mean_personalized)},
                      {"mean_global_model", to_json(loo.mean_global_model)}});
  }
  return {{"config", to_json(spec)}, {"loo", tables}};
}

json sharpness_body(const ExperimentSpec& spec, int fine_tune_iters) {
  if (fine_tune_iters < 0) {
    throw ConfigError("--fine-tune must be non-negative");
  }
  const MlpArchitecture arch = spec.architecture();
  const FederationData fed =
      generate_federation(spec.data, std::nullopt, spec.training.seed);
  json tables = json::array();
  for (Method method : methods_or_throw(spec)) {
    const FederatedConfig cfg = spec.config_for(method);
    const TrainingResult trained = run_training(fed, arch, cfg);
    std::vector<ParamVector> models = personalized_models(trained, method);
    for (std::size_t c = 0; c < models.size(); ++c) {
      models[c] = fine_tune(models[c], fed.clients[c], fine_tune_iters, arch,
                            cfg);
    }
    const auto rows = client_sharpness(models, fed, arch, spec.sharpness);
    json clients = json::array();
    for (const auto& row : rows) {
      json entry = to_json(row.result);
      entry["client_id"] = row.client_id;
      clients.push_back(std::move(entry));
    }
    tables.push_back({{"method", to_string(method)},
                      {"fine_tune_iters", fine_tune_iters},
                      {"clients", clients},
                      {"mean_median_eigenvalue", mean_median_eigenvalue(rows)}});
  }
  return {{"config", to_json(spec)}, {"sharpness", tables}};
}

void cmd_run(const ExperimentSpec& spec) {
  const auto started = std::chrono::steady_clock::now();
  std::ostringstream trace;
  std::function<void(Method, const RoundRecord&)> on_round;
  if (spec.outputs.trace) {
    on_round = [&trace](Method method, const RoundRecord& record) {
      json line = to_json(record);
      line["method"] = to_string(method);
      trace << line.dump() << "\n";
    };
  }
  json body = run_body_traced(spec, on_round);

  std::ostringstream csv;
  csv << "method,local_accuracy,local_auc,global_accuracy,global_auc\n";
  for (const auto& r : body["results"]) {
    auto num = [](const json& v) {
      return v.is_null() ? std::string() : format_number(v.get<double>());
    };
    csv << r["method"].get<std::string>() << ","
        << num(r["local"]["accuracy"]) << "," << num(r["local"]["auc"]) << ","
        << num(r["global"]["accuracy"]) << "," << num(r["global"]["auc"])
        << "\n";
  }
  const auto dir = output_dir(spec);
  write_text(dir / "table1.csv", csv.str());
  if (spec.outputs.trace) write_text(*spec.outputs.trace, trace.str());
  write_report(spec, "run", std::move(body), started);
}

void cmd_tradeoff(const ExperimentSpec& spec) {
  const auto started = std::chrono::steady_clock::now();
  json body = tradeoff_body(spec);
  std::ostringstream csv;
  csv << "method,fine_tune_iters,local_accuracy,local_auc,global_accuracy,"
         "global_auc\n";
  for (const auto& table : body["tradeoff"]) {
    for (const auto& row : table["rows"]) {
      auto num = [](const json& v) {
        return v.is_null() ? std::string() : format_number(v.get<double>());
      };
      csv << table["method"].get<std::string>() << ","
          << row["fine_tune_iters"].get<int>() << ","
          << num(row["local"]["accuracy"]) << "," << num(row["local"]["auc"])
          << "," << num(row["global"]["accuracy"]) << ","
          << num(row["global"]["auc"]) << "\n";
    }
  }
  write_text(output_dir(spec) / "tradeoff.csv", csv.str());
  write_report(spec, "tradeoff", std::move(body), started);
}

void cmd_loo(const ExperimentSpec& spec) {
  const auto started = std::chrono::steady_clock::now();
  json body = loo_body(spec);
  auto num = [](const json& v) {
    return v.is_null() ? std::string() : format_number(v.get<double>());
  };
  std::ostringstream csv;
  csv << "method,holdout,unseen_accuracy,unseen_auc,global_model_accuracy,"
         "global_model_auc\n";
  for (const auto& table : body["loo"]) {
    const std::string method = table["method"].get<std::string>();
    for (const auto& row : table["holdouts"]) {
      csv << method << "," << row["holdout"].get<int>() << ","
          << num(row["unseen"]["accuracy"]) << "," << num(row["unseen"]["auc"])
          << "," << num(row["global_model"]["accuracy"]) << ","
          << num(row["global_model"]["auc"]) << "\n";
    }
    csv << method << ",mean," << num(table["mean_unseen"]["accuracy"]) << ","
        << num(table["mean_unseen"]["auc"]) << ","
        << num(table["mean_global_model"]["accuracy"]) << ","
        << num(table["mean_global_model"]["auc"]) << "\n";
  }
  write_text(output_dir(spec) / "loo.csv", csv.str());
  write_report(spec, "loo", std::move(body), started);
}

void cmd_sharpness(const ExperimentSpec& spec, int fine_tune_iters) {
  const auto started = std::chrono::steady_clock::now();
  json body = sharpness_body(spec, fine_tune_iters);
  std::ostringstream csv;
  csv << "method,client,median_eigenvalue\n";
  for (const auto& table : body["sharpness"]) {
    for (const auto& client : table["clients"]) {
      csv << table["method"].get<std::string>() << ","
          << client["client_id"].get<int>() << ","
          << format_number(client["median_eigenvalue"].get<double>()) << "\n";
    }
  }
  write_text(output_dir(spec) / "sharpness.csv", csv.str());
  write_report(spec, "sharpness", std::move(body), started);
}

void cmd_export_data(const ExperimentSpec& spec, std::optional<int> holdout,
                     const std::optional<std::string>& path) {
  const FederationData fed =
      generate_federation(spec.data, holdout, spec.training.seed);
  json doc = to_json(fed);
  doc["spec"] = to_json(spec)["data"];
  doc["seed"] = spec.training.seed;
  doc["holdout"] = holdout ? json(*holdout) : json(nullptr);
  const std::filesystem::path target =
      path ? std::filesystem::path(*path)
           : output_dir(spec) / "federation.json";
  write_text(target, doc.dump() + "\n");
}

}  // namespace fedsoup
