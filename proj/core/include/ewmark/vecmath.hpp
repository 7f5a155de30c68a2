#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ewmark/errors.hpp"

namespace ewmark {

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimMismatchError("dot: dims " + std::to_string(a.size()) + " vs " +
                           std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// v / ||v||2. Errors on (near-)zero input instead of producing NaNs.
inline std::vector<double> normalize(std::span<const double> v) {
  const double n = norm2(v);
  if (n < 1e-12) throw ZeroVectorError();
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

// Cosine similarity, clamped to [-1,1] against rounding.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na < 1e-12 || nb < 1e-12) throw ZeroVectorError("cosine of zero vector");
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace ewmark
