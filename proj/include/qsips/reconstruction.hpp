#pragma once

// QSIPS, SOFI and g-function super-resolved maps.

#include <cmath>
#include <cstddef>
#include <string>

#include "qsips/combinatorics.hpp"
#include "qsips/errors.hpp"
#include "qsips/estimator.hpp"
#include "qsips/field_map.hpp"
#include "qsips/numeric.hpp"

namespace qsips {

enum class SrMethod { QSIPS, SOFI, SR_G };

inline const char* method_name(SrMethod m) {
  switch (m) {
    case SrMethod::QSIPS: return "QSIPS";
    case SrMethod::SOFI: return "SOFI";
    case SrMethod::SR_G: return "SR_G";
  }
  return "?";
}

struct SuperResMap {
  FieldMap map;
  int order = 1;
  SrMethod method = SrMethod::QSIPS;
  bool sign_normalized = false;
};

inline SuperResMap qsips_map(const CumulantStack& k, int j,
                             const BetaSource& betas = default_beta_source()) {
  if (j < 1) throw RangeError("qsips_map: order must be >= 1");
  if (j > k.j_max()) {
    throw ContractError("qsips_map: order " + std::to_string(j) + " needs cumulants up to " +
                        std::to_string(j) + ", stack has " + std::to_string(k.j_max()));
  }
  const auto beta = betas(j);
  SuperResMap out{FieldMap(k.width, k.height), j, SrMethod::QSIPS, false};
  for (std::size_t px = 0; px < out.map.size(); ++px) {
    long double acc = 0.0L;
    for (int i = 1; i <= j; ++i) {
      acc += static_cast<long double>(beta[static_cast<std::size_t>(i - 1)]) * k.order(i)[px];
    }
    out.map[px] = static_cast<double>(acc);
  }
  return out;
}

inline SuperResMap sofi_map(const CumulantStack& k, int j) {
  if (j < 1) throw RangeError("sofi_map: order must be >= 1");
  if (j > k.j_max()) {
    throw ContractError("sofi_map: order " + std::to_string(j) + " not present in stack");
  }
  return {k.order(j), j, SrMethod::SOFI, false};
}

struct SrOptions {
  double readout_rms = 0.0;  // of the stack the g maps came from
  bool force = false;        // allow g maps from noisy stacks
};

// SR^(j) = <N>^j * P_j(g2..gj) for j = 2..5. Masked pixels (non-positive
// mean) are set to zero.
inline SuperResMap sr_map_via_g(const FieldMap& mean, const GMaps& g, int j, const SrOptions& options = {}) {
  if (j < 2 || j > 5) {
    throw UnsupportedOrderError("sr_map_via_g: closed forms exist for orders 2..5, got " + std::to_string(j));
  }
  if (static_cast<int>(g.g.size()) < j) throw ContractError("sr_map_via_g: g maps missing orders");
  if (options.readout_rms > 0.0 && !options.force) {
    throw ContractError("sr_map_via_g: g maps need noiseless integer counts (readout_rms > 0); pass force to override");
  }
  SuperResMap out{FieldMap(mean.width, mean.height, mean.pixel_pitch), j, SrMethod::SR_G, false};
  for (std::size_t px = 0; px < mean.size(); ++px) {
    if (!g.valid.empty() && !g.valid[px]) {
      out.map[px] = 0.0;
      continue;
    }
    const long double mu = mean[px];
    const long double g2 = g.g[1][px];
    const long double g3 = j >= 3 ? g.g[2][px] : 0.0L;
    const long double g4 = j >= 4 ? g.g[3][px] : 0.0L;
    const long double g5 = j >= 5 ? g.g[4][px] : 0.0L;
    long double bracket = 0.0L;
    switch (j) {
      case 2: bracket = 1 - g2; break;
      case 3: bracket = 1 - 1.5L * g2 + 0.5L * g3; break;
      case 4: bracket = 1 - 2 * g2 + 0.5L * g2 * g2 + (2.0L / 3) * g3 - g4 / 6; break;
      case 5:
        bracket = 1 - 2.5L * g2 + 1.25L * g2 * g2 + (5.0L / 6) * g3 - (5.0L / 12) * g2 * g3 -
                  (5.0L / 24) * g4 + g5 / 24;
        break;
    }
    out.map[px] = static_cast<double>(std::pow(mu, j) * bracket);
  }
  return out;
}

// (-1)^(j-1) / (j-1)!: maps QSIPS^(j) onto the non-negative SR^(j) scale.
inline double sign_factor(int j) {
  return ((j - 1) % 2 == 0 ? 1.0 : -1.0) / factorial(j - 1);
}

inline SuperResMap sign_normalize(const SuperResMap& in) {
  if (in.sign_normalized) throw ContractError("sign_normalize: map already sign-normalized");
  SuperResMap out = in;
  out.sign_normalized = true;
  if (in.method != SrMethod::QSIPS) return out;
  const double f = sign_factor(in.order);
  for (double& v : out.map.values) v *= f;
  return out;
}

}  // namespace qsips
