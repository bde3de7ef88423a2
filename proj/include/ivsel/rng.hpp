#pragma once

// Counter-based derivation of independent random streams from one master
// seed, so that results never depend on evaluation order or thread count.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ivsel {

using Engine = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Stream purposes; mixed into the derived seed so that e.g. the data of a
/// replicate and its bootstrap never share a stream.
enum class StreamPurpose : std::uint64_t {
  data = 1,
  bootstrap = 2,
  rejection = 3,
  sweep_point = 4,
};

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t v : path) h = splitmix64(h ^ splitmix64(v + 0x632BE59BD9B4E019ull));
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, StreamPurpose purpose,
                                 std::uint64_t index) {
  return derive_seed(master, {static_cast<std::uint64_t>(purpose), index});
}

inline Engine make_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Engine(seq);
}

}  // namespace ivsel
