#pragma once

#include <cstdint>
#include <random>

namespace switchstate {

// splitmix64 finalizer; used to derive independent substreams from
// (seed, stream id) so per-sequence sampling is order-independent.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(mix64(mix64(seed) ^ mix64(stream + 0x51ed2701ULL)));
}

}  // namespace switchstate
