#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "fedsoup/nn.hpp"

namespace fedsoup {

// Geometry of one client's source distribution.
struct SourceShift {
  Vector<double> mean_offset;
  double rotation = 0.0;  // radians, applied in the (x0, x1) plane
  double noise_scale = 0.0;
};

struct ClientDataset {
  int client_id = 0;
  Batch train;
  Batch val;
  Batch local_test;
  SourceShift source;

  // train + val + local_test, in that order.
  Batch pool() const;
};

struct FederationData {
  std::vector<ClientDataset> clients;
  Batch global_test;
  // Source index of every global_test row.
  std::vector<int> global_test_sources;
  std::optional<ClientDataset> unseen_client;
};

using SplitFractions = std::array<double, 3>;  // train, val, local_test

// Client i draws class clusters around i * mean_shift_step along the
// all-ones diagonal, with cluster geometry rotated by i * rotation_step.
struct ShiftSpec {
  int n_clients = 4;
  int samples_per_client = 200;
  int input_dim = 2;
  int class_count = 2;
  double rotation_step = 0.5;
  double mean_shift_step = 1.0;
  double label_noise = 0.05;
  // Distance between class centres and the per-axis spread of each cluster
  // (major axis along the boundary, minor axis across it).
  double class_separation = 3.0;
  double cluster_std_major = 1.0;
  double cluster_std_minor = 0.5;
  int global_test_per_client = 50;
  SplitFractions split = {0.60, 0.15, 0.25};

  void validate() const;
  bool operator==(const ShiftSpec&) const = default;
};

// Partition by a seeded shuffle. Sizes are round(fraction * n) for train and
// val, remainder to local_test.
std::array<Batch, 3> split_client_pool(const Batch& pool,
                                       const SplitFractions& fractions,
                                       std::uint64_t seed);

// Same partition expressed as pool row indices.
std::array<std::vector<Eigen::Index>, 3> split_indices(
    Eigen::Index n, const SplitFractions& fractions, std::uint64_t seed);

SourceShift source_for_client(const ShiftSpec& spec, int client_id);

// Draws `count` samples from one client's source distribution.
Batch sample_source(const ShiftSpec& spec, const SourceShift& source,
                    int count, Rng& rng);

FederationData generate_federation(const ShiftSpec& spec,
                                   std::optional<int> holdout_client,
                                   std::uint64_t seed);

}  // namespace fedsoup
