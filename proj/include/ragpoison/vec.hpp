#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace ragpoison {

using EmbeddingVec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Unit vector along v, or e1 when v is zero.
inline EmbeddingVec normalized_or_e1(EmbeddingVec v) {
  const double n = norm(v);
  if (n == 0.0 || !std::isfinite(n)) {
    std::fill(v.begin(), v.end(), 0.0);
    if (!v.empty()) v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= n;
  return v;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace ragpoison
