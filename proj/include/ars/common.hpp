#ifndef ARS_COMMON_HPP
#define ARS_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ars {

// error categories surfaced by the toolkit
struct DimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IOError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Named sub-stream of a master seed. All randomness in the toolkit flows
// through these so that changing e.g. the dropout stream does not perturb
// initialization or shuffling.
inline std::mt19937_64 substream(std::uint64_t seed, const std::string& name) {
  return std::mt19937_64(seed ^ fnv1a(name));
}

}  // namespace ars

#endif
