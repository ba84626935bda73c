#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace mixdta {

using NodeIndex = std::uint32_t;
using LinkIndex = std::uint32_t;
using VehicleId = std::uint32_t;

inline constexpr std::uint32_t kNoIndex = std::numeric_limits<std::uint32_t>::max();

// Error hierarchy --------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input text does not parse under its declared format.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Parsed input violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class NoPathError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Observed data is internally inconsistent (e.g. a link exit before its entry).
class DataError : public Error {
 public:
  using Error::Error;
};

// Random numbers ---------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic RNG. Distribution code is spelled out here rather than taken from
// <random> so that draws are identical across standard library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Independent stream keyed by (seed, stream, substream); used for per-vehicle
  // draws so results do not depend on processing order.
  static Rng stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ (stream + 0x632BE59BD9B4E019ULL));
    h = splitmix64(h ^ (substream + 0x85157AF5ULL));
    return Rng(h);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mixdta
