#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fedsoup {

using Rng = std::mt19937_64;

// Purposes keep streams derived from the same (seed, ids...) tuple apart.
enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kData = 2,
  kTrain = 3,
  kFineTune = 4,
  kSharpness = 5,
  kSplit = 6,
  kGlobalTest = 7,
};

// Independent stream keyed by (seed, purpose, ids...). Never depends on the
// order in which other streams were consumed.
inline Rng make_stream(std::uint64_t seed, StreamPurpose purpose,
                       std::initializer_list<std::uint64_t> ids = {}) {
  std::vector<std::uint32_t> words;
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  push(static_cast<std::uint64_t>(purpose));
  for (auto id : ids) push(id);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Fisher-Yates, written out so the permutation only depends on the engine.
template <typename T>
void fisher_yates(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(items[i - 1], items[pick(rng)]);
  }
}

}  // namespace fedsoup
