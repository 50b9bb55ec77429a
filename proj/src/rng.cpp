#include "sybilfl/rng.hpp"

#include <array>

namespace sybilfl {

Rng make_rng(const StreamKey& key) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  const auto purpose = static_cast<std::uint64_t>(key.purpose);
  std::seed_seq seq{lo(key.seed), hi(key.seed), lo(purpose), lo(key.client), hi(key.client), lo(key.round), hi(key.round)};
  return Rng(seq);
}

}  // namespace sybilfl
