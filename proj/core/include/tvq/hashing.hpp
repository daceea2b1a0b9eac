#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace tvq {

// FNV-1a 64-bit; used for config/checkpoint provenance hashes.
inline uint64_t fnv1a64(std::span<const unsigned char> bytes, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(s.data()), s.size()), h);
}

std::string hex64(uint64_t h);
uint64_t hash_file(const std::string& path);

}  // namespace tvq
