#include "fedsoup/data.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fedsoup/error.hpp"

namespace fedsoup {

Batch ClientDataset::pool() const {
  return concat({&train, &val, &local_test});
}

void ShiftSpec::validate() const {
  if (n_clients < 2) throw ConfigError("data.n_clients must be at least 2");
  if (samples_per_client < 16) {
    throw ConfigError("data.samples_per_client must be at least 16");
  }
  if (input_dim < 2) throw ConfigError("data.input_dim must be at least 2");
  if (class_count < 2) throw ConfigError("data.class_count must be at least 2");
  if (!(label_noise >= 0.0 && label_noise < 0.5)) {
    throw ConfigError("data.label_noise must lie in [0, 0.5)");
  }
  if (!(class_separation >= 0.0)) {
    throw ConfigError("data.class_separation must be non-negative");
  }
  if (!(cluster_std_major > 0.0) || !(cluster_std_minor > 0.0)) {
    throw ConfigError("data.cluster_std_major and data.cluster_std_minor "
                      "must be positive");
  }
  if (global_test_per_client < 1) {
    throw ConfigError("data.global_test_per_client must be at least 1");
  }
  double total = 0.0;
  for (double f : split) {
    if (!(f > 0.0)) throw ConfigError("data.split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("data.split fractions must sum to 1");
  }
}

std::array<std::vector<Eigen::Index>, 3> split_indices(
    Eigen::Index n, const SplitFractions& fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  const auto n_train =
      static_cast<Eigen::Index>(std::llround(fractions[0] * double(n)));
  const auto n_val =
      static_cast<Eigen::Index>(std::llround(fractions[1] * double(n)));
  const Eigen::Index n_test = n - n_train - n_val;
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw ConfigError("pool of " + std::to_string(n) +
                      " samples is too small for non-empty splits");
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng = make_stream(seed, StreamPurpose::kSplit);
  fisher_yates(order, rng);

  std::array<std::vector<Eigen::Index>, 3> parts;
  const auto a = order.begin();
  parts[0].assign(a, a + n_train);
  parts[1].assign(a + n_train, a + n_train + n_val);
  parts[2].assign(a + n_train + n_val, order.end());
  return parts;
}

std::array<Batch, 3> split_client_pool(const Batch& pool,
                                       const SplitFractions& fractions,
                                       std::uint64_t seed) {
  const auto parts = split_indices(pool.size(), fractions, seed);
  return {pool.select(parts[0]), pool.select(parts[1]),
          pool.select(parts[2])};
}

SourceShift source_for_client(const ShiftSpec& spec, int client_id) {
  SourceShift source;
  const double step = spec.mean_shift_step * client_id;
  source.mean_offset = Vector<double>::Constant(
      spec.input_dim, step / std::sqrt(static_cast<double>(spec.input_dim)));
  source.rotation = spec.rotation_step * client_id;
  source.noise_scale = spec.cluster_std_minor;
  return source;
}

Batch sample_source(const ShiftSpec& spec, const SourceShift& source,
                    int count, Rng& rng) {
  const int d = spec.input_dim;
  const int classes = spec.class_count;
  const double c = std::cos(source.rotation);
  const double s = std::sin(source.rotation);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, classes - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick_other(0, classes - 2);

  Batch out;
  out.features.resize(count, d);
  out.labels.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int label = pick_class(rng);
    // Class centres sit on a circle in the (x0, x1) plane; for two classes
    // that is +-separation/2 along x0.
    const double angle = 2.0 * M_PI * label / classes;
    const double radius = 0.5 * spec.class_separation;
    // Unrotated local frame: across-boundary axis x0 (minor spread),
    // along-boundary axis x1 (major spread).
    double u = radius * std::cos(angle) + spec.cluster_std_minor * normal(rng);
    double v = radius * std::sin(angle) + spec.cluster_std_major * normal(rng);
    Vector<double> x(d);
    x[0] = c * u - s * v;
    x[1] = s * u + c * v;
    for (int k = 2; k < d; ++k) x[k] = spec.cluster_std_minor * normal(rng);
    out.features.row(i) = (x + source.mean_offset).transpose();

    int observed = label;
    if (unit(rng) < spec.label_noise) {
      const int other = pick_other(rng);
      observed = other >= label ? other + 1 : other;
    }
    out.labels[static_cast<std::size_t>(i)] = observed;
  }
  return out;
}

FederationData generate_federation(const ShiftSpec& spec,
                                   std::optional<int> holdout_client,
                                   std::uint64_t seed) {
  spec.validate();
  if (holdout_client &&
      (*holdout_client < 0 || *holdout_client >= spec.n_clients)) {
    throw ConfigError("holdout client " + std::to_string(*holdout_client) +
                      " out of range [0, " + std::to_string(spec.n_clients) +
                      ")");
  }

  FederationData fed;
  for (int id = 0; id < spec.n_clients; ++id) {
    // Streams are keyed by client id so a holdout does not perturb the data
    // of the remaining clients.
    const auto uid = static_cast<std::uint64_t>(id);
    Rng pool_rng = make_stream(seed, StreamPurpose::kData, {uid});
    ClientDataset client;
    client.client_id = id;
    client.source = source_for_client(spec, id);
    const Batch pool =
        sample_source(spec, client.source, spec.samples_per_client, pool_rng);
    const std::uint64_t split_seed =
        make_stream(seed, StreamPurpose::kSplit, {uid})();
    auto splits = split_client_pool(pool, spec.split, split_seed);
    client.train = std::move(splits[0]);
    client.val = std::move(splits[1]);
    client.local_test = std::move(splits[2]);

    if (holdout_client && *holdout_client == id) {
      fed.unseen_client = std::move(client);
      continue;
    }

    Rng test_rng = make_stream(seed, StreamPurpose::kGlobalTest, {uid});
    const Batch held_out = sample_source(
        spec, client.source, spec.global_test_per_client, test_rng);
    fed.global_test = fed.clients.empty()
                          ? held_out
                          : concat({&fed.global_test, &held_out});
    fed.global_test_sources.insert(fed.global_test_sources.end(),
                                   static_cast<std::size_t>(held_out.size()),
                                   id);
    fed.clients.push_back(std::move(client));
  }
  return fed;
}

}  // namespace fedsoup
