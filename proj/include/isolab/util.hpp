#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace isolab {

// Shortest decimal string that round-trips to the same double.
std::string format_double(double x);

// FNV-1a over raw bytes; used for content-derived identity tokens.
std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t seed = 1469598103934665603ull);

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t seed) {
  return fnv1a(&v, sizeof v, seed);
}

// Mean and population standard deviation of the last `window` entries
// (or all entries when fewer are present).
struct TailStats {
  double mean = 0.0;
  double stddev = 0.0;
  int window = 0;
};
TailStats tail_stats(const std::vector<double>& values, int window);

}  // namespace isolab
