#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "qsips/combinatorics.hpp"
#include "qsips/errors.hpp"
#include "qsips/moments.hpp"

using namespace qsips;

namespace {

// Enumerates set partitions of {0..n-1} by restricted growth strings and
// calls fn with the block sizes.
template <typename Fn>
void for_each_partition(int n, Fn fn) {
  std::vector<int> a(static_cast<std::size_t>(n), 0);
  std::vector<int> mx(static_cast<std::size_t>(n), 0);
  while (true) {
    std::map<int, int> sizes;
    for (int v : a) ++sizes[v];
    std::vector<int> blocks;
    for (auto [_, c] : sizes) blocks.push_back(c);
    fn(blocks);
    int i = n - 1;
    while (i > 0 && a[static_cast<std::size_t>(i)] == mx[static_cast<std::size_t>(i - 1)] + 1) --i;
    if (i <= 0) return;
    ++a[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < n; ++j) {
      a[static_cast<std::size_t>(j)] = 0;
    }
    for (int j = i; j < n; ++j) {
      const int prev = j == 0 ? 0 : mx[static_cast<std::size_t>(j - 1)];
      mx[static_cast<std::size_t>(j)] = std::max(prev, a[static_cast<std::size_t>(j)]);
    }
  }
}

// Number of permutations of n elements with k cycles (unsigned first kind).
std::int64_t count_permutations_with_cycles(int n, int k) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::int64_t count = 0;
  do {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    int cycles = 0;
    for (int i = 0; i < n; ++i) {
      if (seen[static_cast<std::size_t>(i)]) continue;
      ++cycles;
      for (int j = i; !seen[static_cast<std::size_t>(j)]; j = p[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = true;
      }
    }
    if (cycles == k) ++count;
  } while (std::next_permutation(p.begin(), p.end()));
  return count;
}

}  // namespace

TEST(Stirling, SecondKindMatchesPartitionCount) {
  for (int n = 1; n <= 9; ++n) {
    std::map<int, std::uint64_t> by_blocks;
    for_each_partition(n, [&](const std::vector<int>& b) { ++by_blocks[static_cast<int>(b.size())]; });
    for (int k = 1; k <= n; ++k) EXPECT_EQ(stirling_second(n, k), by_blocks[k]) << n << "," << k;
  }
}

TEST(Stirling, FirstKindMatchesSignedCycleCount) {
  const StirlingTable t;
  for (int n = 1; n <= 8; ++n) {
    for (int k = 1; k <= n; ++k) {
      const std::int64_t sign = ((n - k) % 2 == 0) ? 1 : -1;
      EXPECT_EQ(t.first_kind(n, k), sign * count_permutations_with_cycles(n, k)) << n << "," << k;
    }
  }
}

TEST(Stirling, KnownValues) {
  const StirlingTable t;
  EXPECT_EQ(t.second_kind(5, 2), 15u);
  EXPECT_EQ(t.second_kind(8, 4), 1701u);
  EXPECT_EQ(t.first_kind(5, 2), -50);
  EXPECT_EQ(t.first_kind(6, 3), -225);
  EXPECT_EQ(t.second_kind(20, 10), 5917584964655ull);
}

TEST(Stirling, OrthogonalityUpToTwenty) {
  const StirlingTable t(20);
  EXPECT_TRUE(t.verify_orthogonality(20));
}

TEST(Stirling, ConstructorRange) {
  EXPECT_THROW(StirlingTable(7), RangeError);
  EXPECT_THROW(StirlingTable(21), RangeError);
  EXPECT_NO_THROW(StirlingTable(8));
}

TEST(Stirling, OutOfRangeLookup) {
  const StirlingTable t(8);
  EXPECT_THROW(t.second_kind(9, 1), RangeError);
}

TEST(Beta, RowsAgainstHandValues) {
  // QSIPS^(2) = k2 - k1, QSIPS^(3) = k3 - 3k2 + 2k1.
  EXPECT_EQ(beta_coeffs(1), (std::vector<std::int64_t>{1}));
  EXPECT_EQ(beta_coeffs(2), (std::vector<std::int64_t>{-1, 1}));
  EXPECT_EQ(beta_coeffs(3), (std::vector<std::int64_t>{2, -3, 1}));
  EXPECT_EQ(beta_coeffs(4), (std::vector<std::int64_t>{-6, 11, -6, 1}));
}

TEST(Beta, RowAbsSumIsFactorial) {
  for (int j = 1; j <= 12; ++j) {
    std::int64_t abs_sum = 0;
    for (auto b : beta_coeffs(j)) abs_sum += b < 0 ? -b : b;
    std::int64_t f = 1;
    for (int i = 2; i <= j; ++i) f *= i;
    EXPECT_EQ(abs_sum, f);
  }
}

TEST(Bell, AllOnesGivesSecondKind) {
  for (int i = 1; i <= 12; ++i) {
    for (int k = 1; k <= i; ++k) {
      const std::vector<double> ones(static_cast<std::size_t>(i - k + 1), 1.0);
      EXPECT_EQ(bell_partial(i, k, ones), static_cast<double>(stirling_second(i, k)));
    }
  }
}

TEST(Bell, MatchesPartitionSumForGeneralArguments) {
  const std::vector<double> x{0.7, -1.3, 2.1, 0.4, -0.9, 1.7, 0.25};
  for (int i = 1; i <= 7; ++i) {
    std::map<int, double> oracle;
    for_each_partition(i, [&](const std::vector<int>& blocks) {
      double prod = 1.0;
      for (int b : blocks) prod *= x[static_cast<std::size_t>(b - 1)];
      oracle[static_cast<int>(blocks.size())] += prod;
    });
    for (int k = 1; k <= i; ++k) {
      const std::vector<double> args(x.begin(), x.begin() + (i - k + 1));
      EXPECT_NEAR(bell_partial(i, k, args), oracle[k], 1e-12 * (1 + std::abs(oracle[k]))) << i << "," << k;
    }
  }
}

TEST(Bell, HandExamples) {
  // B_{4,2} = 4 x1 x3 + 3 x2^2.
  const std::vector<double> x{2.0, 3.0, 5.0};
  EXPECT_DOUBLE_EQ(bell_partial(4, 2, x), 4 * 2.0 * 5.0 + 3 * 9.0);
  EXPECT_THROW(bell_partial(4, 2, std::vector<double>{1.0}), ContractError);
  EXPECT_THROW(bell_partial(21, 1, std::vector<double>(21, 1.0)), RangeError);
}

TEST(Moments, BernoulliCumulants) {
  // Bernoulli(p): raw moments all p; k2 = p(1-p), k3 = p(1-p)(1-2p),
  // k4 = p(1-p)(1-6p+6p^2).
  const double p = 0.3;
  const std::vector<double> raw(5, p);
  const auto k = cumulants_from_moments<double>(raw);
  const double q = 1 - p;
  EXPECT_NEAR(k[0], p, 1e-15);
  EXPECT_NEAR(k[1], p * q, 1e-15);
  EXPECT_NEAR(k[2], p * q * (1 - 2 * p), 1e-15);
  EXPECT_NEAR(k[3], p * q * (1 - 6 * p + 6 * p * p), 1e-15);
  EXPECT_NEAR(k[4], p * q * (1 - 2 * p) * (1 - 12 * p + 12 * p * p), 1e-15);
}

TEST(Moments, ExplicitExpansionsToOrderFive) {
  const std::vector<double> m{0.8, 1.9, 5.3, 17.0, 61.0};
  const double m1 = m[0], m2 = m[1], m3 = m[2], m4 = m[3], m5 = m[4];
  const auto k = cumulants_from_moments<double>(m);
  EXPECT_NEAR(k[2], m3 - 3 * m2 * m1 + 2 * m1 * m1 * m1, 1e-12);
  EXPECT_NEAR(k[3], m4 - 4 * m3 * m1 - 3 * m2 * m2 + 12 * m2 * m1 * m1 - 6 * std::pow(m1, 4), 1e-12);
  EXPECT_NEAR(k[4],
              m5 - 5 * m4 * m1 - 10 * m3 * m2 + 20 * m3 * m1 * m1 + 30 * m2 * m2 * m1 - 60 * m2 * std::pow(m1, 3) +
                  24 * std::pow(m1, 5),
              1e-10);
}

TEST(Moments, PoissonCumulantsAllEqualLambda) {
  // Poisson raw moments are Touchard polynomials: m_n = sum_k S(n,k) lambda^k.
  const double lambda = 2.7;
  std::vector<double> raw;
  for (int n = 1; n <= 8; ++n) {
    double v = 0;
    for (int k = 1; k <= n; ++k) v += static_cast<double>(stirling_second(n, k)) * std::pow(lambda, k);
    raw.push_back(v);
  }
  for (double k : cumulants_from_moments<double>(raw)) EXPECT_NEAR(k, lambda, 1e-9 * std::pow(lambda, 8));
}

TEST(Moments, RoundTrip) {
  const std::vector<double> k{1.5, -0.7, 2.2, 0.3, -4.0, 1.1};
  const auto m = moments_from_cumulants<double>(k);
  const auto back = cumulants_from_moments<double>(m);
  for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(back[i], k[i], 1e-10);
}

TEST(Moments, JacobianMatchesFiniteDifferences) {
  const std::vector<double> m{0.9, 2.1, 5.9, 19.0, 70.0, 260.0};
  const auto d = cumulant_jacobian<double>(m);
  for (std::size_t p = 0; p < m.size(); ++p) {
    const double h = 1e-6 * std::max(1.0, std::abs(m[p]));
    auto up = m, dn = m;
    up[p] += h;
    dn[p] -= h;
    const auto ku = cumulants_from_moments<double>(up);
    const auto kd = cumulants_from_moments<double>(dn);
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double fd = (ku[j] - kd[j]) / (2 * h);
      EXPECT_NEAR(d[j][p], fd, 1e-5 * (1 + std::abs(fd))) << j << "," << p;
    }
  }
}

TEST(Moments, ShiftMoments) {
  // Bernoulli(0.25) about its mean: second central moment p q, third p q (q - p).
  const double p = 0.25;
  const std::vector<double> raw(3, p);
  const auto c = shift_moments<double>(raw, p);
  EXPECT_NEAR(c[0], 0.0, 1e-15);
  EXPECT_NEAR(c[1], p * (1 - p), 1e-15);
  EXPECT_NEAR(c[2], p * (1 - p) * (1 - 2 * p), 1e-15);
}
