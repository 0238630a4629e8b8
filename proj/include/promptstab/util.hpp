#pragma once
// Small shared utilities: stable hashing, seeded RNG helpers, string and
// filesystem helpers. Hashes and shuffles here must be identical across
// platforms; nothing in this header may depend on implementation-defined
// library behaviour.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace promptstab::util {

inline constexpr uint64_t kFnvOffset = 1469598103934665603ULL;
inline constexpr uint64_t kFnvPrime = 1099511628211ULL;

inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

// Feeds an integer into the hash byte by byte, little-endian, so the digest
// does not depend on host endianness.
inline uint64_t fnv1a64_u64(uint64_t v, uint64_t h = kFnvOffset) {
  for (int i = 0; i < 8; ++i) {
    h ^= static_cast<unsigned char>(v >> (i * 8));
    h *= kFnvPrime;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Maps a 64-bit hash to [0, 1).
inline double hash_unit(uint64_t h) {
  return static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;
}

// Uniform draw in [0, n) without modulo bias.
inline uint64_t uniform_below(std::mt19937_64& rng, uint64_t n) {
  const uint64_t rem = (std::numeric_limits<uint64_t>::max() % n + 1) % n;
  const uint64_t limit = std::numeric_limits<uint64_t>::max() - rem;
  uint64_t r = rng();
  while (rem != 0 && r > limit) r = rng();
  return r % n;
}

// Fisher-Yates with explicit draws; std::shuffle is implementation-defined.
template <typename T>
void seeded_shuffle(std::vector<T>& items, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (size_t i = items.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string trim_copy(std::string_view s) { return std::string(trim(s)); }

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Shortest decimal form that round-trips the exact double; locale-free.
std::string fmt_double(double v);

std::string read_file(const std::filesystem::path& path);

// Write-temp-then-rename so partially written artifacts are never observed.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

std::string csv_escape(std::string_view field);

}  // namespace promptstab::util
