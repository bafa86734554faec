#include "fedsoup/soup.hpp"

#include "fedsoup/metrics.hpp"

namespace fedsoup {

void SoupSet::add(int round, ParamVector params) {
  if (!entries_.empty()) {
    if (round <= entries_.back().round) {
      throw ConfigError("soup rounds must strictly increase (got " +
                        std::to_string(round) + " after " +
                        std::to_string(entries_.back().round) + ")");
    }
    if (params.size() != entries_.front().params.size()) {
      throw ConfigError("soup entries must share one parameter length");
    }
  }
  entries_.push_back({round, std::move(params)});
}

void SoupSet::reset_to(int round, ParamVector params) {
  entries_.clear();
  entries_.push_back({round, std::move(params)});
}

std::vector<int> SoupSet::rounds() const {
  std::vector<int> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.round);
  return out;
}

std::string to_string(SoupMode mode) {
  return mode == SoupMode::kAccumulate ? "accumulate" : "replace";
}

SoupMode soup_mode_from_string(const std::string& name) {
  if (name == "accumulate") return SoupMode::kAccumulate;
  if (name == "replace") return SoupMode::kReplace;
  throw ConfigError("unknown soup mode '" + name + "'");
}

ParamVector soup_average(const SoupSet& soup,
                         const std::vector<ParamVector>& extras) {
  std::vector<const ParamVector*> inputs;
  inputs.reserve(soup.size() + extras.size());
  for (const auto& e : soup.entries()) inputs.push_back(&e.params);
  for (const auto& v : extras) inputs.push_back(&v);
  if (inputs.empty()) throw ConfigError("soup_average: nothing to average");
  return uniform_mean(inputs);
}

double val_acc(const MlpArchitecture& arch, const ParamVector& params,
               const Batch& val) {
  if (val.empty()) throw ConfigError("val_acc: empty validation split");
  return accuracy(arch, params, val);
}

SelectionOutcome maybe_select(SoupSet soup, int round,
                              const ParamVector& global_params,
                              const ParamVector& local_params,
                              const MlpArchitecture& arch, const Batch& val,
                              SoupMode mode) {
  SelectionOutcome out;
  out.acc_with_global =
      val_acc(arch, soup_average(soup, {local_params, global_params}), val);
  out.acc_without_global =
      val_acc(arch, soup_average(soup, {local_params}), val);
  out.selected = out.acc_with_global >= out.acc_without_global;
  if (out.selected) {
    if (mode == SoupMode::kAccumulate) {
      soup.add(round, global_params);
    } else {
      soup.reset_to(round, global_params);
    }
  }
  out.soup = std::move(soup);
  return out;
}

ParamVector patch(const SoupSet& soup, const ParamVector& local_params) {
  if (soup.empty()) return local_params;
  return soup_average(soup, {local_params});
}

}  // namespace fedsoup
