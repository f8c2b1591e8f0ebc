#pragma once

// Single-pass per-pixel moment accumulation and conversion to cumulant and
// normalised factorial-moment (g) maps.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qsips/combinatorics.hpp"
#include "qsips/errors.hpp"
#include "qsips/field_map.hpp"
#include "qsips/moments.hpp"
#include "qsips/numeric.hpp"

namespace qsips {

inline constexpr int kMaxAccumulatorOrder = 8;

class MomentAccumulator {
 public:
  MomentAccumulator() = default;

  MomentAccumulator(std::size_t width, std::size_t height, int j_max, bool track_factorial = false)
      : width_(width), height_(height), j_max_(j_max), track_factorial_(track_factorial) {
    if (width == 0 || height == 0) throw ContractError("MomentAccumulator: empty grid");
    if (j_max < 1 || j_max > kMaxAccumulatorOrder) {
      throw RangeError("MomentAccumulator: j_max must lie in [1, 8]");
    }
    power_.resize(width * height * static_cast<std::size_t>(j_max));
    if (track_factorial) factorial_.resize(power_.size());
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return width_ * height_; }
  int j_max() const noexcept { return j_max_; }
  bool tracks_factorial() const noexcept { return track_factorial_; }
  std::uint64_t count() const noexcept { return count_; }

  void accumulate(std::span<const double> frame) {
    if (frame.size() != pixel_count()) {
      throw ContractError("accumulate: frame has " + std::to_string(frame.size()) +
                          " values, accumulator expects " + std::to_string(pixel_count()));
    }
    const auto J = static_cast<std::size_t>(j_max_);
    for (std::size_t px = 0; px < frame.size(); ++px) {
      const double x = frame[px];
      auto* sums = &power_[px * J];
      double power = 1.0;
      for (std::size_t p = 0; p < J; ++p) {
        power *= x;
        sums[p].add(power);
      }
      if (track_factorial_) {
        auto* fsums = &factorial_[px * J];
        double falling = 1.0;
        for (std::size_t p = 0; p < J; ++p) {
          falling *= x - static_cast<double>(p);
          fsums[p].add(falling);
        }
      }
    }
    ++count_;
  }

  void merge(const MomentAccumulator& other) {
    if (other.width_ != width_ || other.height_ != height_ || other.j_max_ != j_max_ ||
        other.track_factorial_ != track_factorial_) {
      throw ContractError("merge: accumulator shapes differ");
    }
    for (std::size_t i = 0; i < power_.size(); ++i) power_[i].merge(other.power_[i]);
    for (std::size_t i = 0; i < factorial_.size(); ++i) factorial_[i].merge(other.factorial_[i]);
    count_ += other.count_;
  }

  // Sum over frames of N^p at a pixel, p in 1..j_max.
  long double power_sum(std::size_t pixel, int p) const {
    check(pixel, p);
    const auto& s = power_[pixel * static_cast<std::size_t>(j_max_) + static_cast<std::size_t>(p - 1)];
    return static_cast<long double>(s.sum) + static_cast<long double>(s.compensation);
  }

  // Sum over frames of N (N-1) ... (N-p+1).
  long double factorial_sum(std::size_t pixel, int p) const {
    if (!track_factorial_) throw ContractError("factorial_sum: factorial sums were not tracked");
    check(pixel, p);
    const auto& s =
        factorial_[pixel * static_cast<std::size_t>(j_max_) + static_cast<std::size_t>(p - 1)];
    return static_cast<long double>(s.sum) + static_cast<long double>(s.compensation);
  }

  // Empirical <N^p>, p = 1..order.
  std::vector<long double> raw_moments(std::size_t pixel, int order) const {
    if (count_ == 0) throw EmptySampleError("raw_moments: no frames accumulated");
    std::vector<long double> m(static_cast<std::size_t>(order));
    for (int p = 1; p <= order; ++p) m[p - 1] = power_sum(pixel, p) / static_cast<long double>(count_);
    return m;
  }

 private:
  void check(std::size_t pixel, int p) const {
    if (pixel >= pixel_count()) throw ContractError("pixel index out of range");
    if (p < 1 || p > j_max_) throw RangeError("moment order " + std::to_string(p) + " out of range");
  }

  std::size_t width_ = 0;
  std::size_t height_ = 0;
  int j_max_ = 0;
  bool track_factorial_ = false;
  std::uint64_t count_ = 0;
  std::vector<CompensatedSum<double>> power_;      // [pixel][order]
  std::vector<CompensatedSum<double>> factorial_;  // same layout
};

struct CumulantStack {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint64_t count = 0;  // frames behind the estimate; 0 for exact stacks
  std::vector<FieldMap> k;  // k[j-1] is the order-j cumulant map

  int j_max() const noexcept { return static_cast<int>(k.size()); }

  const FieldMap& order(int j) const {
    if (j < 1 || j > j_max()) {
      throw ContractError("CumulantStack: order " + std::to_string(j) + " not present (j_max " +
                          std::to_string(j_max()) + ")");
    }
    return k[static_cast<std::size_t>(j - 1)];
  }

  const FieldMap& mean() const { return order(1); }

  static CumulantStack zeros(std::size_t width, std::size_t height, int j_max) {
    CumulantStack s;
    s.width = width;
    s.height = height;
    s.k.assign(static_cast<std::size_t>(j_max), FieldMap(width, height));
    return s;
  }
};

enum class CumulantMode { PlugIn, Unbiased };

// Cumulant maps from accumulated power sums. Unbiased mode replaces orders 2
// and 3 by the k-statistics; higher orders stay plug-in.
inline CumulantStack cumulants_from_raw(const MomentAccumulator& acc, int j_max,
                                        CumulantMode mode = CumulantMode::PlugIn) {
  if (acc.count() == 0) throw EmptySampleError("cumulants_from_raw: no frames accumulated");
  if (j_max < 1 || j_max > acc.j_max()) {
    throw RangeError("cumulants_from_raw: j_max " + std::to_string(j_max) +
                     " exceeds accumulator order " + std::to_string(acc.j_max()));
  }
  const long double n = static_cast<long double>(acc.count());
  if (mode == CumulantMode::Unbiased && acc.count() < 3) {
    throw EmptySampleError("cumulants_from_raw: unbiased mode needs at least 3 frames");
  }
  CumulantStack out = CumulantStack::zeros(acc.width(), acc.height(), j_max);
  out.count = acc.count();
  for (std::size_t px = 0; px < acc.pixel_count(); ++px) {
    const auto raw = acc.raw_moments(px, j_max);
    auto k = cumulants_from_moments<long double>(raw);
    if (mode == CumulantMode::Unbiased) {
      const long double s1 = acc.power_sum(px, 1);
      if (j_max >= 2) {
        const long double s2 = acc.power_sum(px, 2);
        k[1] = (n * s2 - s1 * s1) / (n * (n - 1));
        if (j_max >= 3) {
          const long double s3 = acc.power_sum(px, 3);
          k[2] = (2 * s1 * s1 * s1 - 3 * n * s1 * s2 + n * n * s3) / (n * (n - 1) * (n - 2));
        }
      }
    }
    for (int j = 0; j < j_max; ++j) out.k[static_cast<std::size_t>(j)][px] = static_cast<double>(k[j]);
  }
  return out;
}

struct GMaps {
  std::vector<FieldMap> g;     // g[j-1]; g[0] == 1 where valid
  std::vector<std::uint8_t> valid;  // 0 where the mean is not strictly positive

  const FieldMap& order(int j) const {
    if (j < 1 || j > static_cast<int>(g.size())) throw ContractError("GMaps: order not present");
    return g[static_cast<std::size_t>(j - 1)];
  }
};

// g^(j) = <N (N-1) ... (N-j+1)> / <N>^j. Pixels with non-positive mean are
// masked and hold NaN.
inline GMaps g_maps(const MomentAccumulator& acc, int j_max) {
  if (!acc.tracks_factorial()) throw ContractError("g_maps: accumulator lacks factorial sums");
  if (acc.count() == 0) throw EmptySampleError("g_maps: no frames accumulated");
  if (j_max < 1 || j_max > acc.j_max()) throw RangeError("g_maps: j_max out of range");
  const long double n = static_cast<long double>(acc.count());
  GMaps out;
  out.g.assign(static_cast<std::size_t>(j_max), FieldMap(acc.width(), acc.height()));
  out.valid.assign(acc.pixel_count(), 1);
  for (std::size_t px = 0; px < acc.pixel_count(); ++px) {
    const long double mean = acc.power_sum(px, 1) / n;
    if (!(mean > 0)) {
      out.valid[px] = 0;
      for (auto& map : out.g) map[px] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    long double mean_pow = 1.0L;
    for (int j = 1; j <= j_max; ++j) {
      mean_pow *= mean;
      out.g[static_cast<std::size_t>(j - 1)][px] =
          static_cast<double>((acc.factorial_sum(px, j) / n) / mean_pow);
    }
  }
  return out;
}

// g maps from an exact pixel law given as factorial moments and mean per pixel.
inline GMaps g_maps_from_factorial_moments(const std::vector<FieldMap>& factorial_moments) {
  if (factorial_moments.empty()) throw ContractError("g_maps: no factorial moments");
  const FieldMap& mean = factorial_moments.front();
  GMaps out;
  out.g.assign(factorial_moments.size(), FieldMap(mean.width, mean.height));
  out.valid.assign(mean.size(), 1);
  for (std::size_t px = 0; px < mean.size(); ++px) {
    if (!(mean[px] > 0.0)) {
      out.valid[px] = 0;
      for (auto& map : out.g) map[px] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    long double mean_pow = 1.0L;
    for (std::size_t j = 0; j < factorial_moments.size(); ++j) {
      mean_pow *= mean[px];
      out.g[j][px] = static_cast<double>(factorial_moments[j][px] / mean_pow);
    }
  }
  return out;
}

// Delta-method standard error of sum_j weights[j-1] k_j at each pixel, using
// plug-in moments up to twice the highest weighted order.
inline FieldMap combination_standard_error(const MomentAccumulator& acc,
                                           std::span<const double> weights) {
  const int order = static_cast<int>(weights.size());
  if (order < 1 || 2 * order > acc.j_max()) {
    throw RangeError("combination_standard_error: needs accumulator order >= " +
                     std::to_string(2 * order));
  }
  if (acc.count() < 2) throw EmptySampleError("combination_standard_error: need at least 2 frames");
  const long double n = static_cast<long double>(acc.count());
  FieldMap out(acc.width(), acc.height());
  for (std::size_t px = 0; px < acc.pixel_count(); ++px) {
    const auto m = acc.raw_moments(px, 2 * order);
    const std::span<const long double> head(m.data(), static_cast<std::size_t>(order));
    const auto d = cumulant_jacobian<long double>(head);
    std::vector<long double> grad(static_cast<std::size_t>(order), 0.0L);
    for (int j = 0; j < order; ++j) {
      for (int p = 0; p < order; ++p) grad[p] += static_cast<long double>(weights[j]) * d[j][p];
    }
    long double var = 0.0L;
    for (int p = 1; p <= order; ++p) {
      for (int q = 1; q <= order; ++q) {
        const long double cov = m[p + q - 1] - m[p - 1] * m[q - 1];
        var += grad[p - 1] * grad[q - 1] * cov;
      }
    }
    out[px] = var > 0 ? static_cast<double>(std::sqrt(var / n)) : 0.0;
  }
  return out;
}

// Standard error of the QSIPS^(j) combination.
inline FieldMap qsips_standard_error(const MomentAccumulator& acc, int j) {
  const auto beta = beta_coeffs(j);
  std::vector<double> w(beta.begin(), beta.end());
  return combination_standard_error(acc, w);
}

// Standard error of the plain order-j cumulant.
inline FieldMap cumulant_standard_error(const MomentAccumulator& acc, int j) {
  std::vector<double> w(static_cast<std::size_t>(j), 0.0);
  w.back() = 1.0;
  return combination_standard_error(acc, w);
}

}  // namespace qsips
