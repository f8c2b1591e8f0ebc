#pragma once

// Finite photon-number distributions: emitter models, binomial thinning,
// convolution, exact cumulants and Sgurzants (factorial cumulants).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "qsips/combinatorics.hpp"
#include "qsips/errors.hpp"
#include "qsips/moments.hpp"
#include "qsips/numeric.hpp"

namespace qsips {

inline constexpr int kMaxExactOrder = 8;

// Probability mass function over photon number m = 0..size()-1.
class PhotonDistribution {
 public:
  static constexpr double kNormTolerance = 1e-12;

  // Point mass at zero.
  PhotonDistribution() : probs_{1.0} {}

  explicit PhotonDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ContractError("PhotonDistribution: empty probability vector");
    CompensatedSum<long double> total;
    for (std::size_t m = 0; m < probs_.size(); ++m) {
      const double p = probs_[m];
      if (!std::isfinite(p) || p < 0.0) {
        throw ContractError("PhotonDistribution: invalid probability at m=" + std::to_string(m));
      }
      total.add(p);
    }
    if (std::abs(static_cast<double>(total.value()) - 1.0) > kNormTolerance) {
      throw ContractError("PhotonDistribution: probabilities sum to " +
                          std::to_string(static_cast<double>(total.value())));
    }
  }

  static PhotonDistribution delta(std::size_t m) {
    std::vector<double> p(m + 1, 0.0);
    p[m] = 1.0;
    return PhotonDistribution(std::move(p));
  }

  // Rescales to unit mass; used after truncation where the invariant would
  // otherwise be violated by the discarded tail.
  static PhotonDistribution normalized(std::vector<double> probs) {
    CompensatedSum<long double> total;
    for (double p : probs) total.add(p);
    const long double t = total.value();
    if (!(t > 0)) throw ContractError("PhotonDistribution: zero total mass");
    for (double& p : probs) p = static_cast<double>(p / t);
    return PhotonDistribution(std::move(probs));
  }

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  std::size_t max_count() const noexcept { return probs_.size() - 1; }
  double operator[](std::size_t m) const noexcept { return m < probs_.size() ? probs_[m] : 0.0; }

  double mean() const {
    CompensatedSum<long double> acc;
    for (std::size_t m = 1; m < probs_.size(); ++m) acc.add(static_cast<long double>(m) * probs_[m]);
    return static_cast<double>(acc.value());
  }

  // Drops trailing entries that are exactly zero (keeps at least one).
  PhotonDistribution trimmed() const {
    std::size_t last = probs_.size();
    while (last > 1 && probs_[last - 1] == 0.0) --last;
    PhotonDistribution out;
    out.probs_.assign(probs_.begin(), probs_.begin() + static_cast<std::ptrdiff_t>(last));
    return out;
  }

  // Index range [first, last] of non-zero mass.
  std::pair<std::size_t, std::size_t> support() const noexcept {
    std::size_t first = 0;
    while (first + 1 < probs_.size() && probs_[first] == 0.0) ++first;
    std::size_t last = probs_.size() - 1;
    while (last > first && probs_[last] == 0.0) --last;
    return {first, last};
  }

 private:
  std::vector<double> probs_;
};

// ---------------------------------------------------------------------------
// Emitter statistics models

// Two-state blinking source: zero photons with probability b, M otherwise.
struct Blinking {
  double b = 0.0;
  int M = 1;
  bool operator==(const Blinking&) const = default;
};

// Ideal single-photon source, equivalent to Blinking{0, 1}.
struct SinglePhoton {
  bool operator==(const SinglePhoton&) const = default;
};

struct Poisson {
  double lambda = 1.0;
  bool operator==(const Poisson&) const = default;
};

struct Custom {
  PhotonDistribution dist;
  bool operator==(const Custom& o) const {
    return std::ranges::equal(dist.probs(), o.dist.probs());
  }
};

using EmitterStatModel = std::variant<Blinking, SinglePhoton, Poisson, Custom>;

struct PmfOptions {
  // Discarded Poisson tail mass bound. Far below the 1e-12 invariant so that
  // sixth-order cumulants of lambda ~ 50 laws stay exact to ~1e-12.
  double tail_tolerance = 1e-30;
  // Largest photon number a truncated distribution may reach (m_max).
  std::size_t max_count = std::size_t{1} << 22;
};

inline void validate_model(const EmitterStatModel& model) {
  if (const auto* blink = std::get_if<Blinking>(&model)) {
    if (!(blink->b >= 0.0 && blink->b <= 1.0)) throw ContractError("Blinking: b must lie in [0,1]");
    if (blink->M < 1) throw ContractError("Blinking: M must be >= 1");
  } else if (const auto* poisson = std::get_if<Poisson>(&model)) {
    if (!(poisson->lambda > 0.0) || !std::isfinite(poisson->lambda)) {
      throw ContractError("Poisson: lambda must be positive");
    }
  }
}

inline PhotonDistribution pmf(const EmitterStatModel& model, const PmfOptions& options = {}) {
  validate_model(model);
  return std::visit(
      [&](const auto& m) -> PhotonDistribution {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Blinking>) {
          if (static_cast<std::size_t>(m.M) > options.max_count) {
            throw CapacityError("Blinking: M exceeds max_count");
          }
          std::vector<double> p(static_cast<std::size_t>(m.M) + 1, 0.0);
          p[0] = m.b;
          p[static_cast<std::size_t>(m.M)] += 1.0 - m.b;
          return PhotonDistribution(std::move(p));
        } else if constexpr (std::is_same_v<M, SinglePhoton>) {
          return PhotonDistribution(std::vector<double>{0.0, 1.0});
        } else if constexpr (std::is_same_v<M, Poisson>) {
          const double lambda = m.lambda;
          const double log_lambda = std::log(lambda);
          std::vector<double> p;
          for (std::size_t n = 0;; ++n) {
            if (n > options.max_count) {
              throw CapacityError("Poisson(" + std::to_string(lambda) +
                                  "): tail tolerance not reached within max_count");
            }
            const double dn = static_cast<double>(n);
            p.push_back(std::exp(-lambda + dn * log_lambda - std::lgamma(dn + 1.0)));
            // Past the mode the tail is bounded by a geometric series with
            // ratio lambda / (n + 2).
            if (dn + 2.0 > lambda) {
              const double ratio = lambda / (dn + 2.0);
              const double tail = p.back() * (lambda / (dn + 1.0)) / (1.0 - ratio);
              if (tail < options.tail_tolerance) break;
            }
          }
          return PhotonDistribution::normalized(std::move(p));
        } else {
          return m.dist;
        }
      },
      model);
}

inline double mean_photons(const EmitterStatModel& model) {
  validate_model(model);
  return std::visit(
      [](const auto& m) -> double {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Blinking>) {
          return (1.0 - m.b) * m.M;
        } else if constexpr (std::is_same_v<M, SinglePhoton>) {
          return 1.0;
        } else if constexpr (std::is_same_v<M, Poisson>) {
          return m.lambda;
        } else {
          return m.dist.mean();
        }
      },
      model);
}

// ---------------------------------------------------------------------------
// Distribution algebra

namespace detail {

// Binomial(m, eta) pmf into row[0..m], in extended precision.
inline void binomial_row(std::size_t m, long double eta, std::vector<long double>& row) {
  row.assign(m + 1, 0.0L);
  const long double q = 1.0L - eta;
  if (m <= 60) {
    long double coeff = 1.0L;  // C(m, n), exact in the 64-bit mantissa
    for (std::size_t n = 0; n <= m; ++n) {
      if (n > 0) coeff = coeff * static_cast<long double>(m - n + 1) / static_cast<long double>(n);
      row[n] = coeff * std::pow(eta, static_cast<long double>(n)) *
               std::pow(q, static_cast<long double>(m - n));
    }
    return;
  }
  // Ratio recurrence outward from the mode, then normalise; the common scale
  // factor cancels so only ratio rounding remains.
  const long double odds = eta / q;
  auto mode = static_cast<std::size_t>(std::floor((static_cast<long double>(m) + 1.0L) * eta));
  mode = std::min(mode, m);
  row[mode] = 1.0L;
  for (std::size_t n = mode; n < m; ++n) {
    row[n + 1] = row[n] * static_cast<long double>(m - n) / static_cast<long double>(n + 1) * odds;
    if (row[n + 1] == 0.0L) break;
  }
  for (std::size_t n = mode; n > 0; --n) {
    row[n - 1] = row[n] * static_cast<long double>(n) / static_cast<long double>(m - n + 1) / odds;
    if (row[n - 1] == 0.0L) break;
  }
  long double total = 0.0L;
  for (long double v : row) total += v;
  for (long double& v : row) v /= total;
}

}  // namespace detail

// Law of the surviving count when each photon independently survives with
// probability eta.
inline PhotonDistribution binomial_thin(const PhotonDistribution& dist, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ContractError("binomial_thin: eta must lie in [0,1]");
  const auto probs = dist.probs();
  std::vector<double> out(probs.size(), 0.0);
  if (eta == 0.0) {
    out[0] = 1.0;
    return PhotonDistribution(std::move(out));
  }
  if (eta == 1.0) return dist;
  std::vector<long double> acc(probs.size(), 0.0L);
  std::vector<long double> row;
  for (std::size_t m = 0; m < probs.size(); ++m) {
    if (probs[m] == 0.0) continue;
    detail::binomial_row(m, eta, row);
    const long double weight = probs[m];
    for (std::size_t n = 0; n <= m; ++n) acc[n] += weight * row[n];
  }
  for (std::size_t n = 0; n < acc.size(); ++n) out[n] = static_cast<double>(acc[n]);
  return PhotonDistribution::normalized(std::move(out));
}

// Law of the sum of two independent counts.
inline PhotonDistribution convolve(const PhotonDistribution& a, const PhotonDistribution& b) {
  const auto pa = a.probs();
  const auto pb = b.probs();
  const auto [a0, a1] = a.support();
  const auto [b0, b1] = b.support();
  std::vector<long double> acc(pa.size() + pb.size() - 1, 0.0L);
  for (std::size_t i = a0; i <= a1; ++i) {
    if (pa[i] == 0.0) continue;
    const long double wi = pa[i];
    for (std::size_t k = b0; k <= b1; ++k) acc[i + k] += wi * pb[k];
  }
  std::vector<double> out(acc.size());
  for (std::size_t n = 0; n < acc.size(); ++n) out[n] = static_cast<double>(acc[n]);
  return PhotonDistribution::normalized(std::move(out));
}

namespace detail {

// Cumulants z^(1..j_max) in extended precision. Moments are taken about the
// mean before running the raw-moment recursion, which leaves cumulants of
// order >= 2 unchanged and avoids cancelling ~11 decades at order six.
inline std::vector<long double> exact_cumulants_ld(const PhotonDistribution& dist, int j_max) {
  if (j_max < 1 || j_max > kMaxExactOrder) {
    throw RangeError("exact_cumulants: j_max must lie in [1, " + std::to_string(kMaxExactOrder) + "]");
  }
  const auto probs = dist.probs();
  CompensatedSum<long double> mean_acc;
  for (std::size_t m = 1; m < probs.size(); ++m) mean_acc.add(static_cast<long double>(m) * probs[m]);
  const long double mean = mean_acc.value();

  std::vector<CompensatedSum<long double>> central(j_max);
  for (std::size_t m = 0; m < probs.size(); ++m) {
    if (probs[m] == 0.0) continue;
    const long double d = static_cast<long double>(m) - mean;
    long double power = probs[m];
    for (int p = 0; p < j_max; ++p) {
      power *= d;
      central[p].add(power);
    }
  }
  std::vector<long double> moments(j_max);
  for (int p = 0; p < j_max; ++p) moments[p] = central[p].value();
  moments[0] = 0.0L;
  std::vector<long double> k = cumulants_from_moments<long double>(moments);
  k[0] = mean;
  return k;
}

}  // namespace detail

inline std::vector<double> exact_cumulants(const PhotonDistribution& dist, int j_max) {
  const auto k = detail::exact_cumulants_ld(dist, j_max);
  return {k.begin(), k.end()};
}

// Sgurzants sum_{i<=j} beta_{i,j} z^(i) for j = 1..j_max.
inline std::vector<double> sgurzants(const PhotonDistribution& dist, int j_max,
                                     const BetaSource& betas = default_beta_source()) {
  const auto z = detail::exact_cumulants_ld(dist, j_max);
  std::vector<double> out(j_max);
  for (int j = 1; j <= j_max; ++j) {
    const auto beta = betas(j);
    long double acc = 0.0L;
    for (int i = 1; i <= j; ++i) acc += static_cast<long double>(beta[i - 1]) * z[i - 1];
    out[j - 1] = static_cast<double>(acc);
  }
  return out;
}

// Factorial moments <m (m-1) ... (m-j+1)> for j = 1..j_max.
inline std::vector<double> factorial_moments(const PhotonDistribution& dist, int j_max) {
  const auto probs = dist.probs();
  std::vector<CompensatedSum<long double>> acc(j_max);
  for (std::size_t m = 1; m < probs.size(); ++m) {
    if (probs[m] == 0.0) continue;
    long double falling = probs[m];
    for (int j = 0; j < j_max && static_cast<long double>(m) - j > 0; ++j) {
      falling *= static_cast<long double>(m) - j;
      acc[j].add(falling);
    }
  }
  std::vector<double> out(j_max);
  for (int j = 0; j < j_max; ++j) out[j] = static_cast<double>(acc[j].value());
  return out;
}

inline double fano(const PhotonDistribution& dist) {
  const auto k = detail::exact_cumulants_ld(dist, 2);
  if (!(k[0] > 0)) throw UndefinedFanoError("fano: distribution has zero mean");
  return static_cast<double>(k[1] / k[0]);
}

// Fano factor after independent loss with survival probability eta.
inline double fano_after_loss(double f_e, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ContractError("fano_after_loss: eta must lie in [0,1]");
  return eta * (f_e - 1.0) + 1.0;
}

}  // namespace qsips
