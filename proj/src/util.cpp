#include "isolab/util.hpp"

#include <charconv>
#include <cmath>
#include <cstring>

namespace isolab {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

TailStats tail_stats(const std::vector<double>& values, int window) {
  TailStats s;
  if (values.empty() || window <= 0) return s;
  const int n = static_cast<int>(values.size());
  const int w = window < n ? window : n;
  double sum = 0.0;
  for (int i = n - w; i < n; ++i) sum += values[i];
  s.mean = sum / w;
  double var = 0.0;
  for (int i = n - w; i < n; ++i) {
    const double d = values[i] - s.mean;
    var += d * d;
  }
  s.stddev = std::sqrt(var / w);
  s.window = w;
  return s;
}

}  // namespace isolab
