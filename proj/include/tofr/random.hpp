#pragma once

#include <cstdint>
#include <initializer_list>

namespace tofr {

/// SplitMix64 finaliser; used to derive independent sub-seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Mixes a base seed with a sequence of stream identifiers.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> streams) noexcept {
  std::uint64_t s = splitmix64(base);
  for (std::uint64_t v : streams) s = splitmix64(s ^ splitmix64(v + 0x632BE59BD9B4E019ull));
  return s;
}

}  // namespace tofr
