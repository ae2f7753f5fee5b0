#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace epinet {

// All randomness flows from one master seed through named sub-streams
// (data, dropout, mining, init, ...) so components reseed independently.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t stream_key(uint64_t seed, std::string_view name) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a over the stream name
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

inline std::mt19937_64 substream(uint64_t seed, std::string_view name) {
  return std::mt19937_64(stream_key(seed, name));
}

// Extra mix-ins for per-(layer, step) streams such as dropout masks.
inline std::mt19937_64 substream(uint64_t seed, std::string_view name,
                                 uint64_t a, uint64_t b = 0) {
  uint64_t k = stream_key(seed, name);
  k = splitmix64(k ^ splitmix64(a ^ 0x517cc1b727220a95ULL));
  k = splitmix64(k ^ splitmix64(b ^ 0x2545f4914f6cdd1dULL));
  return std::mt19937_64(k);
}

}  // namespace epinet
