#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qsips/combinatorics.hpp"
#include "qsips/errors.hpp"
#include "qsips/numeric.hpp"
#include "qsips/photon_models.hpp"
#include "qsips/verify.hpp"

using namespace qsips;

namespace {

// Central moments by direct summation, then cumulants by the textbook
// central-moment formulas.
std::vector<double> oracle_cumulants(const PhotonDistribution& d) {
  double mean = 0;
  for (std::size_t n = 0; n < d.size(); ++n) mean += n * d[n];
  double c2 = 0, c3 = 0, c4 = 0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    const double x = n - mean;
    c2 += x * x * d[n];
    c3 += x * x * x * d[n];
    c4 += x * x * x * x * d[n];
  }
  return {mean, c2, c3, c4 - 3 * c2 * c2};
}

// Brute-force thinning: for each m, sum the binomial terms directly.
std::vector<double> oracle_thin(const std::vector<double>& p, double eta) {
  std::vector<double> out(p.size(), 0.0);
  for (std::size_t m = 0; m < p.size(); ++m) {
    for (std::size_t n = 0; n <= m; ++n) {
      out[n] += p[m] * binomial_coefficient(static_cast<int>(m), static_cast<int>(n)) * std::pow(eta, n) *
                std::pow(1 - eta, m - n);
    }
  }
  return out;
}

}  // namespace

TEST(PhotonDistribution, Validation) {
  EXPECT_THROW(PhotonDistribution({0.5, 0.4}), ContractError);
  EXPECT_THROW(PhotonDistribution({1.2, -0.2}), ContractError);
  EXPECT_NO_THROW(PhotonDistribution({0.5, 0.5}));
  const auto d = PhotonDistribution::delta(3);
  EXPECT_EQ(d.size(), 4u);
  EXPECT_DOUBLE_EQ(d.mean(), 3.0);
}

TEST(Pmf, BlinkingAndSinglePhoton) {
  const auto b = pmf(Blinking{0.3, 4});
  EXPECT_DOUBLE_EQ(b[0], 0.3);
  EXPECT_DOUBLE_EQ(b[4], 0.7);
  EXPECT_DOUBLE_EQ(b.mean(), 2.8);
  const auto s = pmf(SinglePhoton{});
  EXPECT_DOUBLE_EQ(s[1], 1.0);
  EXPECT_DOUBLE_EQ(mean_photons(Blinking{0.1, 100}), 90.0);
}

TEST(Pmf, PoissonTruncationAndNormalization) {
  const auto p = pmf(Poisson{3.5});
  double sum = 0;
  for (double v : p.probs()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-14);
  EXPECT_NEAR(p[0], std::exp(-3.5), 1e-15);
  EXPECT_NEAR(p[2], std::exp(-3.5) * 3.5 * 3.5 / 2, 1e-15);
  EXPECT_NEAR(p.mean(), 3.5, 1e-12);
  EXPECT_THROW(pmf(Poisson{-1.0}), ContractError);
}

TEST(Pmf, InvalidBlinking) {
  EXPECT_THROW(pmf(Blinking{1.5, 3}), ContractError);
  EXPECT_THROW(pmf(Blinking{0.2, -1}), ContractError);
}

TEST(Thinning, MatchesBruteForce) {
  const std::vector<double> p{0.1, 0.2, 0.05, 0.3, 0.15, 0.2};
  for (double eta : {0.0, 0.2, 0.5, 0.93, 1.0}) {
    const auto t = binomial_thin(PhotonDistribution(p), eta);
    const auto o = oracle_thin(p, eta);
    for (std::size_t n = 0; n < o.size(); ++n) EXPECT_NEAR(n < t.size() ? t[n] : 0.0, o[n], 1e-15);
  }
}

TEST(Thinning, LargeCountRowStaysNormalized) {
  const auto t = binomial_thin(pmf(Blinking{0.3, 60000}), 0.15);
  double sum = 0;
  for (double v : t.probs()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-10);
  EXPECT_NEAR(t.mean(), 0.7 * 60000 * 0.15, 1e-6);
}

TEST(Thinning, ComposesMultiplicatively) {
  const auto d = random_distribution(11, 9);
  const auto a = binomial_thin(binomial_thin(d, 0.6), 0.5);
  const auto b = binomial_thin(d, 0.3);
  for (std::size_t n = 0; n < b.size(); ++n) EXPECT_NEAR(a[n], b[n], 1e-14);
}

TEST(Convolve, TwoBernoullisGiveBinomial) {
  const PhotonDistribution b({0.6, 0.4});
  const auto c = convolve(b, b);
  EXPECT_NEAR(c[0], 0.36, 1e-15);
  EXPECT_NEAR(c[1], 0.48, 1e-15);
  EXPECT_NEAR(c[2], 0.16, 1e-15);
}

TEST(Cumulants, MatchCentralMomentOracle) {
  for (int s = 0; s < 10; ++s) {
    const auto d = random_distribution(100 + s, 3 + s);
    const auto k = exact_cumulants(d, 4);
    const auto o = oracle_cumulants(d);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(k[j], o[j], 1e-11 * (1 + std::abs(o[j])));
  }
}

TEST(Cumulants, AdditiveUnderConvolution) {
  const auto a = random_distribution(1, 6);
  const auto b = random_distribution(2, 4);
  const auto ka = exact_cumulants(a, 6), kb = exact_cumulants(b, 6), kc = exact_cumulants(convolve(a, b), 6);
  for (int j = 0; j < 6; ++j) EXPECT_NEAR(kc[j], ka[j] + kb[j], 1e-10 * (1 + std::abs(kc[j])));
}

TEST(Sgurzants, BernoulliFactorialCumulants) {
  // Bernoulli(p): pgf 1 - p + p z, log-derivatives give (-1)^(j-1) (j-1)! p^j.
  const double p = 0.35;
  const auto s = sgurzants(PhotonDistribution({1 - p, p}), 6);
  for (int j = 1; j <= 6; ++j) {
    const double expect = ((j - 1) % 2 == 0 ? 1 : -1) * factorial(j - 1) * std::pow(p, j);
    EXPECT_NEAR(s[j - 1], expect, 1e-13);
  }
}

TEST(Sgurzants, ThinningLaw) {
  const auto d = random_distribution(77, 10);
  const auto base = sgurzants(d, 6);
  for (double eta : {0.1, 0.37, 0.85}) {
    const auto t = sgurzants(binomial_thin(d, eta), 6);
    for (int j = 1; j <= 6; ++j) EXPECT_NEAR(t[j - 1], std::pow(eta, j) * base[j - 1], 1e-9 * std::abs(base[j - 1]) + 1e-14);
  }
}

TEST(Sgurzants, PoissonVanishAboveFirstOrder) {
  const auto s = sgurzants(pmf(Poisson{5.0}), 6);
  EXPECT_NEAR(s[0], 5.0, 1e-10);
  for (int j = 2; j <= 6; ++j) EXPECT_LT(std::abs(s[j - 1]), 1e-6 * 5.0);
}

TEST(Sgurzants, MutatedBetaBreaksThinningLawOnlyThroughBetas) {
  const auto bad = flipped_sign_beta_source();
  EXPECT_FALSE(check_thinning_law(bad, 10).passed);
  EXPECT_TRUE(check_thinning_law(default_beta_source(), 10).passed);
}

TEST(FactorialMoments, BlinkingClosedForm) {
  // E[N(N-1)] for Blinking(b, M) is (1-b) M (M-1).
  const auto fm = factorial_moments(pmf(Blinking{0.25, 7}), 3);
  EXPECT_NEAR(fm[0], 0.75 * 7, 1e-13);
  EXPECT_NEAR(fm[1], 0.75 * 7 * 6, 1e-12);
  EXPECT_NEAR(fm[2], 0.75 * 7 * 6 * 5, 1e-11);
}

TEST(Fano, ValuesAndLossLaw) {
  EXPECT_NEAR(fano(pmf(Poisson{4.0})), 1.0, 1e-10);
  EXPECT_NEAR(fano(pmf(SinglePhoton{})), 0.0, 1e-15);
  EXPECT_THROW(fano(PhotonDistribution::delta(0)), UndefinedFanoError);
  const auto d = pmf(Blinking{0.3, 60});
  const double f = fano(d);
  for (double eta : {0.1, 0.5, 0.9}) EXPECT_NEAR(fano(binomial_thin(d, eta)), fano_after_loss(f, eta), 1e-9);
}
