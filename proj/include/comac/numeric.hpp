#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace comac {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Softmax with max subtraction.
inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.begin(), z.end());
  if (out.empty()) return out;
  const double m = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& v : out) sum += (v = std::exp(v - m));
  for (auto& v : out) v /= sum;
  return out;
}

/// Index of the first maximum.
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// floor(x + 0.5) with a tolerance so decimal halves such as 0.35 * 10
/// round up despite binary representation error.
inline long long round_half_up(double x) {
  return static_cast<long long>(std::floor(x + 0.5 + 1e-9));
}

}  // namespace comac
