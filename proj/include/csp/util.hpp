#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace csp {

// FNV-1a over raw bytes; used to derive deterministic per-call seeds.
inline uint64_t hash_bytes(const void* data, size_t n, uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t hash_combine(uint64_t h, uint64_t v) {
  return hash_bytes(&v, sizeof(v), h);
}

inline uint64_t hash_doubles(std::span<const double> xs, uint64_t h = 14695981039346656037ull) {
  return hash_bytes(xs.data(), xs.size() * sizeof(double), h);
}

inline uint64_t hash_string(const std::string& s, uint64_t h = 14695981039346656037ull) {
  return hash_bytes(s.data(), s.size(), h);
}

// splitmix64; decorrelates sequential seeds before feeding mt19937_64.
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t x, uint64_t salt) { return mix_seed(x ^ mix_seed(salt)); }

}  // namespace csp
