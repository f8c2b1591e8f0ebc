#pragma once

// Oracle suites behind `qsips verify`. Every check runs against an
// injectable beta source so that a corrupted coefficient table is caught.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsips/combinatorics.hpp"
#include "qsips/estimator.hpp"
#include "qsips/moments.hpp"
#include "qsips/numeric.hpp"
#include "qsips/photon_models.hpp"
#include "qsips/reconstruction.hpp"
#include "qsips/rng.hpp"

namespace qsips {

struct CheckResult {
  std::string name;
  double tolerance = 0.0;
  double deviation = 0.0;
  bool passed = false;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
      arr.push_back({{"name", c.name}, {"tolerance", c.tolerance}, {"deviation", c.deviation}, {"passed", c.passed}});
    }
    return {{"checks", arr}, {"all_passed", all_passed()}};
  }
};

// Random pmf on 0..max_count with strictly positive weights.
inline PhotonDistribution random_distribution(std::uint64_t seed, std::size_t max_count) {
  SplitMix64 rng(splitmix64(seed));
  std::vector<double> p(max_count + 1);
  for (double& v : p) v = 0.05 + rng.uniform();
  return PhotonDistribution::normalized(std::move(p));
}

// Beta rows with the sign of beta_{1,j} flipped for j >= 2.
inline BetaSource flipped_sign_beta_source() {
  return [](int j) {
    auto row = beta_coeffs(j);
    if (j >= 2) row[0] = -row[0];
    return row;
  };
}

namespace detail {

inline CheckResult make_check(std::string name, double tolerance, double deviation) {
  return {std::move(name), tolerance, deviation, std::isfinite(deviation) && deviation <= tolerance};
}

}  // namespace detail

inline CheckResult check_orthogonality(const BetaSource& betas, int j_max = 8) {
  double worst = 0.0;
  for (int j = 1; j <= j_max; ++j) {
    const auto row = betas(j);
    for (int k = 1; k <= j; ++k) {
      int128 acc = 0;
      for (int i = k; i <= j; ++i) {
        acc += static_cast<int128>(row[static_cast<std::size_t>(i - 1)]) * static_cast<int128>(stirling_second(i, k));
      }
      worst = std::max(worst, std::abs(static_cast<double>(acc - (j == k ? 1 : 0))));
    }
  }
  return detail::make_check("stirling_orthogonality_j_le_8", 0.0, worst);
}

inline CheckResult check_bell_all_ones(int i_max = 8) {
  double worst = 0.0;
  for (int i = 1; i <= i_max; ++i) {
    for (int k = 1; k <= i; ++k) {
      const std::vector<double> ones(static_cast<std::size_t>(i - k + 1), 1.0);
      worst = std::max(worst, std::abs(bell_partial(i, k, ones) - static_cast<double>(stirling_second(i, k))));
    }
  }
  return detail::make_check("bell_all_ones_equals_stirling_second", 0.0, worst);
}

inline CheckResult check_beta_row_identities(const BetaSource& betas, int j_max = 8) {
  double worst = 0.0;
  for (int j = 1; j <= j_max; ++j) {
    const auto row = betas(j);
    std::int64_t abs_sum = 0, sum = 0;
    for (auto b : row) {
      abs_sum += b < 0 ? -b : b;
      sum += b;
    }
    worst = std::max(worst, std::abs(static_cast<double>(abs_sum) - factorial(j)));
    worst = std::max(worst, std::abs(static_cast<double>(sum) - (j == 1 ? 1.0 : 0.0)));
  }
  return detail::make_check("beta_row_sums", 0.0, worst);
}

inline CheckResult check_thinning_law(const BetaSource& betas, int n_distributions = 50, std::uint64_t seed = 2024) {
  double worst = 0.0;
  for (int d = 0; d < n_distributions; ++d) {
    const auto dist = random_distribution(seed + static_cast<std::uint64_t>(d), 2 + static_cast<std::size_t>(d % 11));
    const auto base = sgurzants(dist, 6, betas);
    for (double eta : {0.1, 0.37, 0.85}) {
      const auto thinned = sgurzants(binomial_thin(dist, eta), 6, betas);
      for (int j = 1; j <= 6; ++j) {
        const double expect = std::pow(eta, j) * base[static_cast<std::size_t>(j - 1)];
        worst = std::max(worst, relative_difference(thinned[static_cast<std::size_t>(j - 1)], expect));
      }
    }
  }
  return detail::make_check("thinning_sgurzant_law", 1e-8, worst);
}

inline CheckResult check_poisson_nulling(const BetaSource& betas) {
  double worst = 0.0;
  for (double lambda : {0.5, 5.0, 50.0}) {
    const auto s = sgurzants(pmf(Poisson{lambda}), 6, betas);
    for (int j = 2; j <= 6; ++j) worst = std::max(worst, std::abs(s[static_cast<std::size_t>(j - 1)]) / lambda);
  }
  return detail::make_check("poisson_nulling", 1e-6, worst);
}

// QSIPS^(j) from cumulants against (-1)^(j-1) (j-1)! SR^(j) from g values,
// on random exact laws.
inline CheckResult check_qsips_sr_equivalence(const BetaSource& betas, int n_distributions = 20,
                                              std::uint64_t seed = 77) {
  double worst = 0.0;
  for (int d = 0; d < n_distributions; ++d) {
    const auto dist = random_distribution(seed + static_cast<std::uint64_t>(d), 3 + static_cast<std::size_t>(d % 9));
    const auto z = exact_cumulants(dist, 5);
    const auto fm = factorial_moments(dist, 5);
    CumulantStack k = CumulantStack::zeros(1, 1, 5);
    std::vector<FieldMap> fmaps;
    for (int j = 0; j < 5; ++j) {
      k.k[static_cast<std::size_t>(j)][0] = z[static_cast<std::size_t>(j)];
      fmaps.emplace_back(1, 1, 1.0, fm[static_cast<std::size_t>(j)]);
    }
    const GMaps g = g_maps_from_factorial_moments(fmaps);
    for (int j = 2; j <= 5; ++j) {
      const double q = qsips_map(k, j, betas).map[0];
      const double sr = sr_map_via_g(fmaps[0], g, j).map[0];
      const double scaled = (j % 2 == 0 ? -1.0 : 1.0) * factorial(j - 1) * sr;
      worst = std::max(worst, relative_difference(q, scaled));
    }
  }
  return detail::make_check("qsips_sr_g_equivalence", 1e-8, worst);
}

inline VerifyReport run_verification(const BetaSource& betas = default_beta_source()) {
  VerifyReport r;
  r.checks.push_back(check_orthogonality(betas));
  r.checks.push_back(check_bell_all_ones());
  r.checks.push_back(check_beta_row_identities(betas));
  r.checks.push_back(check_thinning_law(betas));
  r.checks.push_back(check_poisson_nulling(betas));
  r.checks.push_back(check_qsips_sr_equivalence(betas));
  return r;
}

}  // namespace qsips
