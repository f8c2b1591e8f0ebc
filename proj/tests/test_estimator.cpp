#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qsips/errors.hpp"
#include "qsips/estimator.hpp"
#include "qsips/frame_sim.hpp"
#include "qsips/rng.hpp"

using namespace qsips;

namespace {

// Two-pass central moments of a sample.
std::vector<double> central(const std::vector<double>& x, int order) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  std::vector<double> c(static_cast<std::size_t>(order + 1), 0.0);
  c[1] = mean;
  for (double v : x) {
    for (int p = 2; p <= order; ++p) c[static_cast<std::size_t>(p)] += std::pow(v - mean, p);
  }
  for (int p = 2; p <= order; ++p) c[static_cast<std::size_t>(p)] /= static_cast<double>(x.size());
  return c;
}

std::vector<std::vector<double>> random_frames(std::size_t n_frames, std::size_t px, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<std::vector<double>> frames(n_frames, std::vector<double>(px));
  for (auto& f : frames) {
    for (auto& v : f) v = std::floor(6 * rng.uniform()) + (rng.uniform() < 0.1 ? 10 : 0);
  }
  return frames;
}

}  // namespace

TEST(Accumulator, PlugInCumulantsMatchTwoPass) {
  const auto frames = random_frames(500, 3, 1);
  MomentAccumulator acc(3, 1, 4);
  for (const auto& f : frames) acc.accumulate(f);
  const auto k = cumulants_from_raw(acc, 4);
  for (std::size_t px = 0; px < 3; ++px) {
    std::vector<double> x;
    for (const auto& f : frames) x.push_back(f[px]);
    const auto c = central(x, 4);
    EXPECT_NEAR(k.order(1)[px], c[1], 1e-12);
    EXPECT_NEAR(k.order(2)[px], c[2], 1e-10);
    EXPECT_NEAR(k.order(3)[px], c[3], 1e-9);
    EXPECT_NEAR(k.order(4)[px], c[4] - 3 * c[2] * c[2], 1e-8);
  }
}

TEST(Accumulator, UnbiasedKStatistics) {
  const auto frames = random_frames(40, 1, 2);
  MomentAccumulator acc(1, 1, 3);
  std::vector<double> x;
  for (const auto& f : frames) {
    acc.accumulate(f);
    x.push_back(f[0]);
  }
  const double n = 40;
  const auto c = central(x, 3);
  const auto k = cumulants_from_raw(acc, 3, CumulantMode::Unbiased);
  EXPECT_NEAR(k.order(2)[0], n / (n - 1) * c[2], 1e-10);
  EXPECT_NEAR(k.order(3)[0], n * n / ((n - 1) * (n - 2)) * c[3], 1e-9);
}

TEST(Accumulator, SmallSampleBias) {
  // Blinking(b=0.3, M=4): k2 = M^2 b q, k3 = M^3 b q (b - q) with q = 1 - b.
  const double b = 0.3, q = 0.7, M = 4;
  const double k2 = M * M * b * q, k3 = M * M * M * b * q * (b - q);
  const int reps = 1000000;
  const std::size_t n = 10;
  SplitMix64 rng(stream_key(2024, 10));
  double plug2 = 0, unb2 = 0, unb3 = 0, unb2_sq = 0, unb3_sq = 0;
  std::vector<double> frame(1);
  for (int r = 0; r < reps; ++r) {
    MomentAccumulator acc(1, 1, 3);
    for (std::size_t i = 0; i < n; ++i) {
      frame[0] = rng.uniform() < b ? 0.0 : M;
      acc.accumulate(frame);
    }
    plug2 += cumulants_from_raw(acc, 2).order(2)[0];
    const auto u = cumulants_from_raw(acc, 3, CumulantMode::Unbiased);
    unb2 += u.order(2)[0];
    unb3 += u.order(3)[0];
    unb2_sq += u.order(2)[0] * u.order(2)[0];
    unb3_sq += u.order(3)[0] * u.order(3)[0];
  }
  const double se2 = std::sqrt((unb2_sq / reps - std::pow(unb2 / reps, 2)) / reps);
  const double se3 = std::sqrt((unb3_sq / reps - std::pow(unb3 / reps, 2)) / reps);
  EXPECT_NEAR(unb2 / reps, k2, 5 * se2);
  EXPECT_NEAR(unb3 / reps, k3, 5 * se3);
  EXPECT_NEAR(plug2 / reps, k2 * (n - 1.0) / n, 5 * se2);
}

TEST(Accumulator, MergeEqualsSequential) {
  const auto frames = random_frames(300, 4, 3);
  MomentAccumulator all(2, 2, 6, true), a(2, 2, 6, true), b(2, 2, 6, true);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    all.accumulate(frames[i]);
    (i < 117 ? a : b).accumulate(frames[i]);
  }
  a.merge(b);
  EXPECT_EQ(a.count(), all.count());
  const auto ka = cumulants_from_raw(a, 6), kall = cumulants_from_raw(all, 6);
  for (int j = 1; j <= 6; ++j) {
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(ka.order(j)[i], kall.order(j)[i], 1e-10 * (1 + std::abs(kall.order(j)[i])));
  }
  MomentAccumulator wrong(3, 1, 6);
  EXPECT_THROW(a.merge(wrong), ContractError);
}

TEST(Accumulator, ConstantStackHasNoHigherCumulants) {
  MomentAccumulator acc(2, 1, 6);
  const std::vector<double> frame{7.0, 123456.0};
  for (int i = 0; i < 1000; ++i) acc.accumulate(frame);
  const auto k = cumulants_from_raw(acc, 6);
  EXPECT_DOUBLE_EQ(k.order(1)[1], 123456.0);
  for (int j = 2; j <= 6; ++j) {
    EXPECT_NEAR(k.order(j)[0], 0.0, 1e-9);
    EXPECT_NEAR(k.order(j)[1], 0.0, 1e-9 * std::pow(123456.0, j - 1));
  }
}

TEST(Accumulator, Errors) {
  EXPECT_THROW(MomentAccumulator(1, 1, 9), RangeError);
  EXPECT_THROW(MomentAccumulator(0, 1, 2), ContractError);
  MomentAccumulator acc(1, 1, 3);
  EXPECT_THROW(cumulants_from_raw(acc, 2), EmptySampleError);
  acc.accumulate(std::vector<double>{1.0});
  acc.accumulate(std::vector<double>{2.0});
  EXPECT_THROW(cumulants_from_raw(acc, 2, CumulantMode::Unbiased), EmptySampleError);
  EXPECT_THROW(cumulants_from_raw(acc, 4), RangeError);
  EXPECT_THROW(acc.accumulate(std::vector<double>{1.0, 2.0}), ContractError);
  EXPECT_THROW(g_maps(acc, 2), ContractError);
}

TEST(GMaps, HandValuesAndMask) {
  MomentAccumulator acc(2, 1, 3, true);
  // Pixel 0 sees 0, 1, 3; pixel 1 never fires.
  for (double v : {0.0, 1.0, 3.0}) acc.accumulate(std::vector<double>{v, 0.0});
  const GMaps g = g_maps(acc, 3);
  const double mean = 4.0 / 3;
  EXPECT_NEAR(g.order(2)[0], (6.0 / 3) / (mean * mean), 1e-12);
  EXPECT_NEAR(g.order(3)[0], (6.0 / 3) / (mean * mean * mean), 1e-12);
  EXPECT_EQ(g.valid[1], 0);
  EXPECT_TRUE(std::isnan(g.order(2)[1]));
}

TEST(StandardError, MatchesReplicateSpread) {
  Scene s;
  s.emitters.push_back({{0.0, 0.0}, Blinking{0.3, 4}, 0.6});
  const auto wide = IlluminationPattern::wide_field();
  const int reps = 300;
  const std::size_t n = 2000;
  double sum = 0, sq = 0, se_mean = 0;
  for (int r = 0; r < reps; ++r) {
    const auto acc = accumulate_simulated(s, wide, n, {stream_key(17, r)}, 6);
    const double q = cumulants_from_raw(acc, 3).order(3)[0] - 3 * cumulants_from_raw(acc, 3).order(2)[0] +
                     2 * cumulants_from_raw(acc, 3).order(1)[0];
    sum += q;
    sq += q * q;
    se_mean += qsips_standard_error(acc, 3)[0];
  }
  const double sd = std::sqrt(sq / reps - (sum / reps) * (sum / reps));
  // The delta-method error should track the replicate spread to ~10%.
  EXPECT_NEAR(se_mean / reps / sd, 1.0, 0.15);
}

TEST(StandardError, NeedsDoubleOrder) {
  MomentAccumulator acc(1, 1, 5);
  acc.accumulate(std::vector<double>{1.0});
  acc.accumulate(std::vector<double>{2.0});
  EXPECT_THROW(qsips_standard_error(acc, 3), RangeError);
  EXPECT_NO_THROW(qsips_standard_error(acc, 2));
}
