#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace qsips {

// 128-bit integer for exact identity checks.
__extension__ typedef __int128 int128;

// Neumaier (improved Kahan-Babuska) compensated sum. Mergeable: adding
// another accumulator folds both its running sum and its compensation.
template <typename T = double>
struct CompensatedSum {
  T sum{0};
  T compensation{0};

  void add(T x) noexcept {
    const T t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      compensation += (sum - t) + x;
    } else {
      compensation += (x - t) + sum;
    }
    sum = t;
  }

  void merge(const CompensatedSum& other) noexcept {
    add(other.sum);
    add(other.compensation);
  }

  T value() const noexcept { return sum + compensation; }
};

// Symmetric relative difference, 0 when both values are exactly zero.
inline double relative_difference(double a, double b) noexcept {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale == 0.0) return 0.0;
  return std::abs(a - b) / scale;
}

// Binomial coefficient as a floating value (exact up to ~2^53).
inline double binomial_coefficient(int n, int k) noexcept {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int i = 1; i <= k; ++i) {
    r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return std::round(r);
}

inline double factorial(int n) noexcept {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

}  // namespace qsips
