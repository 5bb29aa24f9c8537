#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace gcf {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for stream `index` under `base`; streams are independent of each other
// and of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

// Uniform integer in [0, bound) by rejection; identical on every platform
// (std::uniform_int_distribution is not).
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = bound * (UINT64_MAX / bound);
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return draw % bound;
}

template <typename T>
void shuffle_in_place(std::span<T> values, std::mt19937_64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace gcf
