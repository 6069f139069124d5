#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace lantern {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t stream_tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named, indexed sub-stream of a master seed. Streams used by the pipeline:
/// "network", "cascades", "init", "descendants", "batches", "rollouts",
/// "predict".
inline Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(seed ^ stream_tag(name));
  s = splitmix64(s + index * 0xd1b54a32d192ed03ULL);
  return Rng(s);
}

/// Uniform in [0, 1) with 53 random bits; identical on every platform.
template <typename Gen>
double uniform01(Gen& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n).
template <typename Gen>
std::uint64_t uniform_index(Gen& gen, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(gen) * static_cast<double>(n)) % n;
}

/// Standard normal via Box-Muller; platform independent.
template <typename Gen>
double standard_normal(Gen& gen) {
  double u1 = uniform01(gen);
  const double u2 = uniform01(gen);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace lantern
