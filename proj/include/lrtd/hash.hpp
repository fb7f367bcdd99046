#pragma once
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace lrtd {

inline std::uint64_t fnv1a64(const void *data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  const auto *p = static_cast<const unsigned char *>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string &s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), seed);
}

inline std::uint64_t fnv1a64(const std::vector<float> &v,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
  return v.empty() ? fnv1a64(nullptr, 0, seed) : fnv1a64(v.data(), v.size() * sizeof(float), seed);
}

inline std::string hex64(std::uint64_t x) {
  static const char *digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, x >>= 4) s[i] = digits[x & 0xf];
  return s;
}

}  // namespace lrtd
