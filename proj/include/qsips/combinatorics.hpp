#pragma once

// Exact Stirling numbers of both kinds, the QSIPS coefficient rows and
// partial Bell polynomials.
//
// Conventions: first_kind(j, i) is the signed coefficient of x^i in the
// falling factorial x(x-1)...(x-j+1); beta_{i,j} = first_kind(j, i).
// second_kind(i, k) counts partitions of an i-set into k blocks.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qsips/errors.hpp"
#include "qsips/numeric.hpp"

namespace qsips {

class StirlingTable {
 public:
  static constexpr int kMaxSupportedOrder = 20;

  explicit StirlingTable(int max_order = kMaxSupportedOrder) : max_order_(max_order) {
    if (max_order < 8 || max_order > kMaxSupportedOrder) {
      throw RangeError("StirlingTable: max_order must lie in [8, " +
                       std::to_string(kMaxSupportedOrder) + "], got " +
                       std::to_string(max_order));
    }
    s1_.assign(max_order + 1, std::vector<std::int64_t>(max_order + 1, 0));
    s2_.assign(max_order + 1, std::vector<std::uint64_t>(max_order + 1, 0));
    s1_[0][0] = 1;
    s2_[0][0] = 1;
    for (int j = 1; j <= max_order; ++j) {
      for (int i = 1; i <= j; ++i) {
        // s(j,i) = s(j-1,i-1) - (j-1) s(j-1,i)
        std::int64_t scaled = 0;
        std::int64_t value = 0;
        if (__builtin_mul_overflow(static_cast<std::int64_t>(j - 1), s1_[j - 1][i], &scaled) ||
            __builtin_sub_overflow(s1_[j - 1][i - 1], scaled, &value)) {
          throw CapacityError("StirlingTable: first-kind overflow at order " + std::to_string(j));
        }
        s1_[j][i] = value;

        // S(j,i) = S(j-1,i-1) + i S(j-1,i)
        std::uint64_t scaled2 = 0;
        std::uint64_t value2 = 0;
        if (__builtin_mul_overflow(static_cast<std::uint64_t>(i), s2_[j - 1][i], &scaled2) ||
            __builtin_add_overflow(s2_[j - 1][i - 1], scaled2, &value2)) {
          throw CapacityError("StirlingTable: second-kind overflow at order " + std::to_string(j));
        }
        s2_[j][i] = value2;
      }
    }
  }

  int max_order() const noexcept { return max_order_; }

  std::int64_t first_kind(int j, int i) const {
    check_pair(j, i, "first_kind");
    return s1_[j][i];
  }

  std::uint64_t second_kind(int i, int k) const {
    check_pair(i, k, "second_kind");
    return s2_[i][k];
  }

  // beta_{1..j, j}: the weights combining cumulants k^(1..j) into QSIPS^(j).
  std::vector<std::int64_t> beta_coeffs(int j) const {
    if (j < 1 || j > max_order_) {
      throw RangeError("beta_coeffs: order " + std::to_string(j) + " outside [1, " +
                       std::to_string(max_order_) + "]");
    }
    return {s1_[j].begin() + 1, s1_[j].begin() + j + 1};
  }

  // Sum_{i=k}^{j} s(j,i) S(i,k) == delta_{j,k} for all 1 <= k <= j <= j_max,
  // evaluated in 128-bit integers.
  bool verify_orthogonality(int j_max) const {
    if (j_max < 1 || j_max > max_order_) {
      throw RangeError("verify_orthogonality: j_max " + std::to_string(j_max) + " outside table");
    }
    for (int j = 1; j <= j_max; ++j) {
      for (int k = 1; k <= j; ++k) {
        int128 acc = 0;
        for (int i = k; i <= j; ++i) {
          acc += static_cast<int128>(s1_[j][i]) * static_cast<int128>(s2_[i][k]);
        }
        if (acc != (j == k ? 1 : 0)) return false;
      }
    }
    return true;
  }

 private:
  void check_pair(int n, int k, const char* what) const {
    if (k < 1 || k > n || n > max_order_) {
      throw RangeError(std::string(what) + ": indices (" + std::to_string(n) + ", " +
                       std::to_string(k) + ") outside 1 <= k <= n <= " +
                       std::to_string(max_order_));
    }
  }

  int max_order_;
  std::vector<std::vector<std::int64_t>> s1_;
  std::vector<std::vector<std::uint64_t>> s2_;
};

inline const StirlingTable& stirling_table() {
  static const StirlingTable table;
  return table;
}

inline std::vector<std::int64_t> beta_coeffs(int j) { return stirling_table().beta_coeffs(j); }

inline std::uint64_t stirling_second(int i, int k) { return stirling_table().second_kind(i, k); }

inline bool verify_orthogonality(int j_max) { return stirling_table().verify_orthogonality(j_max); }

// Source of beta rows; lets verification suites run against a substituted
// (e.g. deliberately corrupted) coefficient provider.
using BetaSource = std::function<std::vector<std::int64_t>(int)>;

inline BetaSource default_beta_source() {
  return [](int j) { return beta_coeffs(j); };
}

namespace detail {

inline std::uint64_t factorial_u64(int n) {
  std::uint64_t r = 1;
  for (int i = 2; i <= n; ++i) r *= static_cast<std::uint64_t>(i);
  return r;
}

// Walks block sizes l = 1, 2, ... choosing the multiplicity j_l. `denom`
// accumulates prod j_l! (l!)^{j_l}, which always divides i!, so each term's
// coefficient i! / denom is an exact integer.
inline void bell_partial_terms(int i, int k, int l, int parts_left, int weight_left,
                               std::span<const double> args, std::uint64_t denom, double product,
                               double& total) {
  const int max_l = i - k + 1;
  if (l > max_l) {
    if (parts_left == 0 && weight_left == 0) {
      total += static_cast<double>(factorial_u64(i) / denom) * product;
    }
    return;
  }
  const std::uint64_t lf = factorial_u64(l);
  std::uint64_t d = denom;
  double p = product;
  for (int count = 0; count <= parts_left && count * l <= weight_left; ++count) {
    if (count > 0) {
      d *= lf * static_cast<std::uint64_t>(count);
      p *= args[static_cast<std::size_t>(l - 1)];
    }
    bell_partial_terms(i, k, l + 1, parts_left - count, weight_left - count * l, args, d, p, total);
  }
}

}  // namespace detail

// Partial Bell polynomial B_{i,k}(x_1, ..., x_{i-k+1}) by its multi-index sum
//   sum i! / prod(j_l! (l!)^{j_l}) * prod x_l^{j_l}
// over j_1 + j_2 + ... = k and 1 j_1 + 2 j_2 + ... = i.
inline double bell_partial(int i, int k, std::span<const double> args) {
  if (k < 1 || k > i || i > StirlingTable::kMaxSupportedOrder) {
    throw RangeError("bell_partial: need 1 <= k <= i <= 20, got (" + std::to_string(i) + ", " +
                     std::to_string(k) + ")");
  }
  if (static_cast<int>(args.size()) != i - k + 1) {
    throw ContractError("bell_partial: expected " + std::to_string(i - k + 1) +
                        " arguments, got " + std::to_string(args.size()));
  }
  double total = 0.0;
  detail::bell_partial_terms(i, k, 1, k, i, args, 1, 1.0, total);
  return total;
}

}  // namespace qsips
