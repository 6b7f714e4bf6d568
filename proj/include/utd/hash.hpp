#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace utd {

/// 64-bit FNV-1a. Used for content hashes in run manifests and image checksums.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

}  // namespace utd
