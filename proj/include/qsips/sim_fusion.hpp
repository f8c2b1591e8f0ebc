#pragma once

// Structured-illumination fusion of first- and second-order maps: band
// separation across phases, band relocation, generalised Wiener
// recombination and apodisation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "qsips/analysis.hpp"
#include "qsips/errors.hpp"
#include "qsips/fft.hpp"
#include "qsips/field_map.hpp"

namespace qsips {

using cplx = std::complex<double>;

// Harmonic content of a map recorded under I = (1 - cos(2 pi p.r + phi)) / 2.
// The order-j map sees I^j; band b carries weight coeff(b).
struct BandModel {
  std::vector<int> bands;
  std::map<int, double> coeff;

  // Mean maps (I) have bands 0, +-1; second-order maps (I^2) add +-2.
  static BandModel for_order(int map_order, int n_bands) {
    if (n_bands != 3 && n_bands != 5) throw ContractError("BandModel: n_bands must be 3 or 5");
    BandModel m;
    m.bands = n_bands == 3 ? std::vector<int>{-1, 0, 1} : std::vector<int>{-2, -1, 0, 1, 2};
    if (map_order == 1) {
      m.coeff = {{-2, 0.0}, {-1, -0.25}, {0, 0.5}, {1, -0.25}, {2, 0.0}};
    } else if (map_order == 2) {
      m.coeff = {{-2, 1.0 / 16}, {-1, -0.25}, {0, 3.0 / 8}, {1, -0.25}, {2, 1.0 / 16}};
    } else {
      throw UnsupportedOrderError("BandModel: only first- and second-order maps are fused");
    }
    return m;
  }

  int max_band() const {
    int r = 0;
    for (int b : bands) r = std::max(r, std::abs(b));
    return r;
  }
};

struct SpectrumComponent {
  ComplexMap spectrum;
  double offset_x = 0.0;  // carrier, cycles per original pixel
  double offset_y = 0.0;
  int band = 0;
};

// Acquisition grid: maps[t][f] was recorded at thetas[t], phis[f].
struct AcquisitionSet {
  std::vector<double> thetas;
  std::vector<double> phis;
  double p_mag = 0.0;
  std::vector<std::vector<FieldMap>> maps;

  void validate() const {
    if (thetas.empty() || phis.empty()) throw ContractError("AcquisitionSet: empty grid");
    if (maps.size() != thetas.size()) throw ContractError("AcquisitionSet: theta count mismatch");
    const FieldMap& ref = maps.front().front();
    for (std::size_t t = 0; t < maps.size(); ++t) {
      if (maps[t].size() != phis.size()) {
        throw ContractError("AcquisitionSet: theta " + std::to_string(t) + " has " +
                            std::to_string(maps[t].size()) + " maps, expected " + std::to_string(phis.size()));
      }
      for (const auto& m : maps[t]) {
        if (!m.same_shape(ref) || m.pixel_pitch != ref.pixel_pitch) {
          throw ContractError("AcquisitionSet: maps differ in shape");
        }
      }
    }
  }
};

inline std::size_t count_distinct_phases(const std::vector<double>& phases) {
  std::vector<double> wrapped;
  for (double p : phases) {
    double w = std::fmod(p, 2 * std::numbers::pi);
    if (w < 0) w += 2 * std::numbers::pi;
    wrapped.push_back(w);
  }
  std::sort(wrapped.begin(), wrapped.end());
  std::size_t n = 0;
  for (std::size_t i = 0; i < wrapped.size(); ++i) {
    if (i == 0 || wrapped[i] - wrapped[i - 1] > 1e-9) ++n;
  }
  if (n > 1 && wrapped.back() - wrapped.front() > 2 * std::numbers::pi - 1e-9) --n;
  return n;
}

// Condition number of the phase matrix A[f][b] = exp(i b phi_f).
inline double phase_matrix_condition(const std::vector<double>& phases, const std::vector<int>& bands) {
  Eigen::MatrixXcd A(static_cast<Eigen::Index>(phases.size()), static_cast<Eigen::Index>(bands.size()));
  for (std::size_t f = 0; f < phases.size(); ++f) {
    for (std::size_t b = 0; b < bands.size(); ++b) {
      A(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)) = std::polar(1.0, bands[b] * phases[f]);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  return smin > 0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

// Least-squares solve of spectra[f] = sum_b exp(i b phi_f) B_b for the band
// spectra B_b, returned in the order of `bands`.
inline std::vector<ComplexMap> separate_bands(const std::vector<ComplexMap>& spectra,
                                              const std::vector<double>& phases,
                                              const std::vector<int>& bands = {-1, 0, 1}) {
  if (spectra.size() != phases.size()) throw ContractError("separate_bands: one spectrum per phase required");
  const std::size_t distinct = count_distinct_phases(phases);
  if (distinct < std::max<std::size_t>(3, bands.size())) {
    throw DegeneratePhasesError("separate_bands: " + std::to_string(distinct) + " distinct phases for " +
                                std::to_string(bands.size()) + " bands");
  }
  const double cond = phase_matrix_condition(phases, bands);
  if (!(cond < 1e8)) {
    throw DegeneratePhasesError("separate_bands: phase matrix condition number " + std::to_string(cond));
  }
  const auto nf = static_cast<Eigen::Index>(phases.size());
  const auto nb = static_cast<Eigen::Index>(bands.size());
  Eigen::MatrixXcd A(nf, nb);
  for (Eigen::Index f = 0; f < nf; ++f) {
    for (Eigen::Index b = 0; b < nb; ++b) A(f, b) = std::polar(1.0, bands[static_cast<std::size_t>(b)] * phases[static_cast<std::size_t>(f)]);
  }
  const Eigen::MatrixXcd pinv = A.completeOrthogonalDecomposition().pseudoInverse();
  const ComplexMap& ref = spectra.front();
  std::vector<ComplexMap> out(bands.size(), ComplexMap(ref.width, ref.height, ref.pixel_pitch));
  for (std::size_t i = 0; i < ref.size(); ++i) {
    for (Eigen::Index b = 0; b < nb; ++b) {
      cplx acc = 0.0;
      for (Eigen::Index f = 0; f < nf; ++f) acc += pinv(b, f) * spectra[static_cast<std::size_t>(f)][i];
      out[static_cast<std::size_t>(b)][i] = acc;
    }
  }
  return out;
}

// spectrum * conj(otf) / (|otf|^2 + w).
inline ComplexMap wiener_filter(const ComplexMap& spectrum, const ComplexMap& otf, double w) {
  if (!(w > 0.0)) throw ContractError("wiener_filter: w must be positive");
  if (!spectrum.same_shape(otf)) throw ContractError("wiener_filter: shape mismatch");
  ComplexMap out = spectrum;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= std::conj(otf[i]) / (std::norm(otf[i]) + w);
  return out;
}

// Gaussian OTF of a PSF with standard deviation sigma (original pixels),
// sampled on the centred grid of `like`, optionally offset: H(k + offset).
inline ComplexMap gaussian_otf(const ComplexMap& like, double sigma, double offset_x = 0.0, double offset_y = 0.0) {
  ComplexMap out(like.width, like.height, like.pixel_pitch);
  const double pitch = like.pixel_pitch;
  const double c = 2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma;
  for (std::size_t y = 0; y < like.height; ++y) {
    const double ky = centered_frequency(y, like.height) / pitch + offset_y;
    for (std::size_t x = 0; x < like.width; ++x) {
      const double kx = centered_frequency(x, like.width) / pitch + offset_x;
      out.at(x, y) = std::exp(-c * (kx * kx + ky * ky));
    }
  }
  return out;
}

// Moves spectral content by +delta (cycles per original pixel): the result
// at k equals the input at k - delta. Done with a real-space ramp, so
// sub-bin offsets are exact.
inline ComplexMap shift_spectrum(const ComplexMap& spectrum, double delta_x, double delta_y) {
  if (!std::isfinite(delta_x) || !std::isfinite(delta_y)) throw ContractError("shift_spectrum: non-finite offset");
  if (delta_x == 0.0 && delta_y == 0.0) return spectrum;
  ComplexMap image = ifft2_centered(spectrum);
  const double pitch = image.pixel_pitch;
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const double phase = 2.0 * std::numbers::pi *
                           (delta_x * static_cast<double>(x) + delta_y * static_cast<double>(y)) * pitch;
      image.at(x, y) *= std::polar(1.0, phase);
    }
  }
  return fft2_centered(image);
}

struct FusionParams {
  double w = 0.05;          // relative to the peak of the summed |OTF|^2
  bool apodize = true;      // raised cosine out to the extended support
  std::size_t upsample = 0; // 0 picks the smallest factor whose Nyquist covers the support
  int bands = 3;            // 3 or 5
  int map_order = 2;        // 1 for mean maps, 2 for second-order maps
  double sigma = 1.0;       // detection PSF sigma, original pixels
  std::optional<BandModel> band_model;  // overrides the order-derived model
  bool unit_otf = false;    // treat every band as unblurred
};

struct FusionResult {
  FieldMap fused;
  double support_radius = 0.0;  // extended support, cycles per original pixel
  std::size_t upsample = 1;
};

// Extended support radius used for apodisation and automatic upsampling.
inline double fusion_support(const FusionParams& params, const BandModel& model, double p_mag) {
  const double k_abbe = 0.42 / params.sigma;
  return model.max_band() * p_mag + std::sqrt(static_cast<double>(params.map_order)) * k_abbe;
}

inline FusionResult fuse(const AcquisitionSet& acq, const FusionParams& params = {}) {
  acq.validate();
  if (!(params.sigma > 0.0)) throw ContractError("fuse: sigma must be positive");
  if (!(params.w > 0.0)) throw ContractError("fuse: w must be positive");
  const BandModel model = params.band_model ? *params.band_model : BandModel::for_order(params.map_order, params.bands);
  const double support = fusion_support(params, model, acq.p_mag);
  const FieldMap& ref = acq.maps.front().front();
  std::size_t up = params.upsample;
  if (up == 0) {
    up = 1;
    while (0.5 * static_cast<double>(up) / ref.pixel_pitch <= support) ++up;
  }
  const double map_sigma = params.sigma / std::sqrt(static_cast<double>(params.map_order));

  std::optional<ComplexMap> numerator;
  std::vector<double> denominator;
  for (std::size_t t = 0; t < acq.thetas.size(); ++t) {
    std::vector<ComplexMap> spectra;
    spectra.reserve(acq.phis.size());
    for (const auto& m : acq.maps[t]) spectra.push_back(fft2_centered(fourier_interpolate(m, up)));
    const auto bands = separate_bands(spectra, acq.phis, model.bands);
    const double px = acq.p_mag * std::cos(acq.thetas[t]);
    const double py = acq.p_mag * std::sin(acq.thetas[t]);
    if (!numerator) {
      numerator = ComplexMap(spectra.front().width, spectra.front().height, spectra.front().pixel_pitch);
      denominator.assign(numerator->size(), 0.0);
    }
    for (std::size_t bi = 0; bi < model.bands.size(); ++bi) {
      const int b = model.bands[bi];
      const double c = model.coeff.at(b);
      if (c == 0.0) continue;
      // R_b(k) = B_b(k + b p); its transfer function is c_b H(k + b p).
      const ComplexMap relocated = shift_spectrum(bands[bi], -b * px, -b * py);
      ComplexMap otf = params.unit_otf ? ComplexMap(relocated.width, relocated.height, relocated.pixel_pitch, 1.0)
                                       : gaussian_otf(relocated, map_sigma, b * px, b * py);
      for (std::size_t i = 0; i < otf.size(); ++i) {
        const cplx h = c * otf[i];
        (*numerator)[i] += std::conj(h) * relocated[i];
        denominator[i] += std::norm(h);
      }
    }
  }
  const double peak = *std::max_element(denominator.begin(), denominator.end());
  const double reg = params.w * peak;
  ComplexMap spectrum = *numerator;
  const double pitch = spectrum.pixel_pitch;
  for (std::size_t y = 0; y < spectrum.height; ++y) {
    const double ky = centered_frequency(y, spectrum.height) / pitch;
    for (std::size_t x = 0; x < spectrum.width; ++x) {
      const double kx = centered_frequency(x, spectrum.width) / pitch;
      const std::size_t i = y * spectrum.width + x;
      double apod = 1.0;
      if (params.apodize) {
        const double r = std::hypot(kx, ky);
        apod = r < support ? 0.5 * (1.0 + std::cos(std::numbers::pi * r / support)) : 0.0;
      }
      spectrum[i] = spectrum[i] / (denominator[i] + reg) * apod;
    }
  }
  return {real_part(ifft2_centered(spectrum)), support, up};
}

struct PatternEstimate {
  double p_mag = 0.0;
  double theta = 0.0;
  double px = 0.0;
  double py = 0.0;
  bool reliable = true;  // false when the peak touches the Nyquist edge
};

struct PatternSearch {
  double angle_tolerance = 0.35;  // radians around the hint
  double min_frequency = 0.03;    // cycles per original pixel
  double peak_to_median = 8.0;    // detection threshold
};

// Locates the sideband of a sinusoidal modulation near orientation
// theta_hint, with log-parabolic sub-bin refinement.
inline PatternEstimate estimate_pattern_vector(const FieldMap& map, double theta_hint,
                                               const PatternSearch& search = {}) {
  const std::size_t W = map.width;
  const std::size_t H = map.height;
  if (W < 4 || H < 4) throw ContractError("estimate_pattern_vector: map too small");
  double mean = 0.0;
  for (double v : map.values) mean += v;
  mean /= static_cast<double>(map.size());
  FieldMap windowed(W, H, map.pixel_pitch);
  for (std::size_t y = 0; y < H; ++y) {
    const double wy = 0.5 * (1 - std::cos(2 * std::numbers::pi * (static_cast<double>(y) + 0.5) / static_cast<double>(H)));
    for (std::size_t x = 0; x < W; ++x) {
      const double wx = 0.5 * (1 - std::cos(2 * std::numbers::pi * (static_cast<double>(x) + 0.5) / static_cast<double>(W)));
      windowed.at(x, y) = (map.at(x, y) - mean) * wx * wy;
    }
  }
  const ComplexMap s = fft2_centered(windowed);
  const double pitch = map.pixel_pitch;
  auto angle_diff = [](double a, double b) {
    // Distance modulo pi: a sideband and its mirror share an orientation.
    double d = std::fmod(std::abs(a - b), std::numbers::pi);
    return std::min(d, std::numbers::pi - d);
  };
  std::vector<double> mags;
  double best = -1.0;
  std::size_t bx = 0, by = 0;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double kx = centered_frequency(x, W) / pitch;
      const double ky = centered_frequency(y, H) / pitch;
      const double r = std::hypot(kx, ky);
      if (r < search.min_frequency) continue;
      const double ang = std::atan2(ky, kx);
      if (angle_diff(ang, theta_hint) > search.angle_tolerance) continue;
      // Keep the sideband on the hint's side.
      if (std::cos(ang - theta_hint) < 0) continue;
      const double m = std::abs(s.at(x, y));
      mags.push_back(m);
      if (m > best) {
        best = m;
        bx = x;
        by = y;
      }
    }
  }
  if (mags.empty()) throw NotFoundError("estimate_pattern_vector: empty search region");
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2), mags.end());
  const double median = mags[mags.size() / 2];
  if (!(best > search.peak_to_median * median) || !(best > 0)) {
    throw NotFoundError("estimate_pattern_vector: no sideband above threshold near theta " + std::to_string(theta_hint));
  }
  PatternEstimate est;
  auto refine = [&](std::size_t i, std::size_t n, bool along_x, bool& reliable) {
    if (i == 0 || i + 1 >= n) {
      reliable = false;
      return 0.0;
    }
    const auto at = [&](std::size_t k) {
      return std::log(std::max(1e-300, std::abs(along_x ? s.at(k, by) : s.at(bx, k))));
    };
    const double lm = at(i - 1), l0 = at(i), lp = at(i + 1);
    const double den = lm - 2 * l0 + lp;
    if (den >= 0) return 0.0;
    return std::clamp(0.5 * (lm - lp) / den, -0.5, 0.5);
  };
  const double dx = refine(bx, W, true, est.reliable);
  const double dy = refine(by, H, false, est.reliable);
  est.px = (centered_frequency(bx, W) + dx / static_cast<double>(W)) / pitch;
  est.py = (centered_frequency(by, H) + dy / static_cast<double>(H)) / pitch;
  est.p_mag = std::hypot(est.px, est.py);
  est.theta = std::atan2(est.py, est.px);
  return est;
}

}  // namespace qsips
