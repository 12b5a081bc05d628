#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cuedet {

inline constexpr const char* kVersion = "0.1.0";

// Thrown when an input value breaks an operation's precondition.
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown on filesystem / read / write failures.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a record does not match the corpus schema; message names the line.
struct schema_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when tensor shapes or configs disagree.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a module contract is violated (e.g. an unfrozen cue encoder
// handed to the hate trainer).
struct contract_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a training run fails its own postcondition.
struct training_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// FNV-1a, used for config hashes in run manifests.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fnv1a_hex(const std::string& bytes);

}  // namespace cuedet
