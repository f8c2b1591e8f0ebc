#pragma once

#include <span>
#include <vector>

#include "qsips/errors.hpp"
#include "qsips/numeric.hpp"

namespace qsips {

// Cumulants from raw moments via the recursion
//   k_j = m_j - sum_{i=1}^{j-1} C(j-1, i-1) k_i m_{j-i},
// raw[p-1] holds <N^p>. Returns k_1..k_J with J = raw.size().
// (Weighting by C(j-1, i) instead gives k_3 = m_3 - 3 m_1 m_2 + m_1^3, which
// is wrong; the explicit low-order expansions fix the index.)
//
// The recursion is exact for moments about any origin; callers that pass
// moments about a shift c get k_1 - c in the first slot and unchanged
// cumulants for j >= 2.
template <typename T>
std::vector<T> cumulants_from_moments(std::span<const T> raw) {
  const int order = static_cast<int>(raw.size());
  std::vector<T> k(order, T(0));
  for (int j = 1; j <= order; ++j) {
    T value = raw[j - 1];
    for (int i = 1; i <= j - 1; ++i) {
      value -= static_cast<T>(binomial_coefficient(j - 1, i - 1)) * k[i - 1] * raw[j - i - 1];
    }
    k[j - 1] = value;
  }
  return k;
}

// Jacobian d k_j / d m_p of the recursion above, row j-1, column p-1.
template <typename T>
std::vector<std::vector<T>> cumulant_jacobian(std::span<const T> raw) {
  const int order = static_cast<int>(raw.size());
  const std::vector<T> k = cumulants_from_moments(raw);
  std::vector<std::vector<T>> d(order, std::vector<T>(order, T(0)));
  for (int j = 1; j <= order; ++j) {
    for (int p = 1; p <= order; ++p) {
      T value = (p == j) ? T(1) : T(0);
      for (int i = 1; i <= j - 1; ++i) {
        const T c = static_cast<T>(binomial_coefficient(j - 1, i - 1));
        value -= c * d[i - 1][p - 1] * raw[j - i - 1];
        if (j - i == p) value -= c * k[i - 1];
      }
      d[j - 1][p - 1] = value;
    }
  }
  return d;
}

// Inverse of cumulants_from_moments. Also maps factorial cumulants to
// factorial moments, which obey the same exponential relation.
template <typename T>
std::vector<T> moments_from_cumulants(std::span<const T> k) {
  const int order = static_cast<int>(k.size());
  std::vector<T> m(order, T(0));
  for (int j = 1; j <= order; ++j) {
    T value = k[j - 1];
    for (int i = 1; i <= j - 1; ++i) {
      value += static_cast<T>(binomial_coefficient(j - 1, i - 1)) * k[i - 1] * m[j - i - 1];
    }
    m[j - 1] = value;
  }
  return m;
}

// Moments about `shift` from moments about zero: binomial re-expansion.
template <typename T>
std::vector<T> shift_moments(std::span<const T> raw, T shift) {
  const int order = static_cast<int>(raw.size());
  std::vector<T> out(order, T(0));
  for (int p = 1; p <= order; ++p) {
    // E[(N - c)^p] = sum_q C(p,q) E[N^q] (-c)^{p-q}
    T acc = T(0);
    T neg_pow = T(1);  // (-c)^{p-q}, built from q = p downwards
    for (int q = p; q >= 0; --q) {
      const T moment = (q == 0) ? T(1) : raw[q - 1];
      acc += static_cast<T>(binomial_coefficient(p, q)) * moment * neg_pow;
      neg_pow *= -shift;
    }
    out[p - 1] = acc;
  }
  return out;
}

}  // namespace qsips
