#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cfqp {

using Rng = std::mt19937_64;

//! SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) noexcept
{
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

//! Seed for one stage of one repetition: mix64(mix64(seed) ^ hash(tag)).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept
{
  return mix64(mix64(seed) ^ hash_tag(tag));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept
{
  return mix64(mix64(seed) ^ mix64(index ^ 0x5bd1e995ULL));
}

inline double uniform01(Rng& rng)
{
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

} // namespace cfqp
