#pragma once

#include <cstdint>
#include <random>

namespace sybilfl {

using Rng = std::mt19937_64;

// Independent purposes get disjoint streams even under the same seed.
enum class Stream : std::uint64_t {
  Init = 1,
  Partition = 2,
  Synthetic = 3,
  LocalTrain = 4,
  TargetModel = 5,
  PoisonSelect = 6,
  ClientSelect = 7,
  OfflineTarget = 8,
  SybilTrain = 9,
};

/// Key of one random stream: (experiment seed, purpose, client, round).
struct StreamKey {
  std::uint64_t seed = 0;
  Stream purpose = Stream::Init;
  std::uint64_t client = 0;
  std::uint64_t round = 0;
};

Rng make_rng(const StreamKey& key);

inline Rng make_rng(std::uint64_t seed, Stream purpose, std::uint64_t client = 0, std::uint64_t round = 0) {
  return make_rng(StreamKey{seed, purpose, client, round});
}

}  // namespace sybilfl
