#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rws {

using Rng = std::mt19937_64;

// 64-bit finalizer from splitmix64.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Independent stream per (seed, method, K, purpose).
inline Rng make_stream(std::uint64_t seed, std::string_view method, std::uint64_t k,
                       std::string_view purpose) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ hash_string(method));
  h = mix64(h ^ k);
  h = mix64(h ^ hash_string(purpose));
  return Rng(h);
}

// Uniform on the open interval (0,1); exact endpoints are redrawn and the
// result is clamped to [1e-12, 1 - 1e-12] before any log-log transform.
inline double open_uniform(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v = 0.0;
  do {
    v = u(rng);
  } while (v <= 0.0 || v >= 1.0);
  constexpr double lo = 1e-12;
  constexpr double hi = 1.0 - 1e-12;
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace rws
