#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace avuseg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes don't fit the operation.
struct ShapeError : Error {
  using Error::Error;
};

// Value outside the mathematically valid range (log of <= 0, bad config).
struct DomainError : Error {
  using Error::Error;
};

// File format / serialization problems.
struct IoError : Error {
  using Error::Error;
};

// Probability clamp applied before every log.
inline constexpr double kProbEps = 1e-7;

using Rng = std::mt19937_64;

// Stable sub-stream derivation so parallel consumers (MC samples, scans)
// get independent, scheduling-independent streams.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

}  // namespace avuseg
