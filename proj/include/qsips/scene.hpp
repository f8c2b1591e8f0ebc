#pragma once

// Emitter layout, Gaussian PSF, detector grid and sinusoidal illumination.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "qsips/errors.hpp"
#include "qsips/field_map.hpp"
#include "qsips/photon_models.hpp"

namespace qsips {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct PSFModel {
  double sigma = 1.0;  // pixels
  double peak = 1.0;   // detection probability at the emitter position

  // Peak that makes the PSF integrate to one over the plane.
  static double unit_sum_peak(double sigma) {
    return 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
  }

  double operator()(double dx, double dy) const {
    return peak * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
  }

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ContractError("PSFModel: sigma must be positive");
    if (!(peak > 0.0 && peak <= 1.0)) throw ContractError("PSFModel: peak must lie in (0,1]");
  }

  bool operator==(const PSFModel&) const = default;
};

struct Emitter {
  Point position;
  EmitterStatModel model = SinglePhoton{};
  double rho = 1.0;  // optical transmission

  void validate() const {
    if (!std::isfinite(position.x) || !std::isfinite(position.y)) {
      throw ContractError("Emitter: non-finite position");
    }
    if (!(rho > 0.0 && rho <= 1.0)) throw ContractError("Emitter: rho must lie in (0,1]");
    validate_model(model);
  }

  bool operator==(const Emitter&) const = default;
};

struct IlluminationPattern {
  double theta = 0.0;
  double phi = 0.0;
  double p_mag = 0.0;  // cycles per pixel
  bool uniform = true;

  static IlluminationPattern wide_field() { return {}; }
  static IlluminationPattern sinusoid(double theta, double phi, double p_mag) {
    if (!(p_mag >= 0.0)) throw ContractError("IlluminationPattern: p_mag must be >= 0");
    return {theta, phi, p_mag, false};
  }

  double px() const { return p_mag * std::cos(theta); }
  double py() const { return p_mag * std::sin(theta); }

  bool operator==(const IlluminationPattern&) const = default;
};

// Emitter list may be empty: such scenes produce readout-only frames.
struct Scene {
  std::vector<Emitter> emitters;
  PSFModel psf;
  std::size_t width = 1;
  std::size_t height = 1;
  double readout_rms = 0.0;

  void validate() const {
    if (width < 1 || height < 1) throw ContractError("Scene: grid must be at least 1x1");
    if (!(readout_rms >= 0.0) || !std::isfinite(readout_rms)) {
      throw ContractError("Scene: readout_rms must be >= 0");
    }
    psf.validate();
    for (const auto& e : emitters) e.validate();
  }

  std::size_t pixel_count() const noexcept { return width * height; }

  bool operator==(const Scene&) const = default;
};

// eta_alpha at the centre of pixel (ix, iy).
inline double detection_prob(const Scene& scene, std::size_t emitter_index, std::size_t ix,
                             std::size_t iy) {
  if (emitter_index >= scene.emitters.size() || ix >= scene.width || iy >= scene.height) {
    throw ContractError("detection_prob: index out of range");
  }
  const Emitter& e = scene.emitters[emitter_index];
  return e.rho * scene.psf(static_cast<double>(ix) - e.position.x,
                           static_cast<double>(iy) - e.position.y);
}

// Full eta field of one emitter, row-major.
inline std::vector<double> detection_field(const Scene& scene, std::size_t emitter_index) {
  std::vector<double> out(scene.pixel_count());
  for (std::size_t iy = 0; iy < scene.height; ++iy) {
    for (std::size_t ix = 0; ix < scene.width; ++ix) {
      out[iy * scene.width + ix] = detection_prob(scene, emitter_index, ix, iy);
    }
  }
  return out;
}

inline double illumination_weight(const IlluminationPattern& pattern, Point r) {
  if (pattern.uniform) return 1.0;
  const double arg = 2.0 * std::numbers::pi * (pattern.px() * r.x + pattern.py() * r.y) + pattern.phi;
  return 0.5 * (1.0 - std::cos(arg));
}

inline double abbe_frequency(const PSFModel& psf) {
  if (!(psf.sigma > 0.0)) throw ContractError("abbe_frequency: sigma must be positive");
  return 0.42 / psf.sigma;
}

inline FieldMap expected_intensity_map(const Scene& scene, const IlluminationPattern& pattern) {
  scene.validate();
  FieldMap out(scene.width, scene.height);
  for (std::size_t a = 0; a < scene.emitters.size(); ++a) {
    const Emitter& e = scene.emitters[a];
    const double excitation = mean_photons(e.model) * illumination_weight(pattern, e.position);
    if (excitation == 0.0) continue;
    for (std::size_t iy = 0; iy < scene.height; ++iy) {
      for (std::size_t ix = 0; ix < scene.width; ++ix) {
        out.at(ix, iy) += excitation * detection_prob(scene, a, ix, iy);
      }
    }
  }
  return out;
}

// Orientation and phase grids used for structured acquisitions.
inline std::vector<double> default_theta_grid() {
  const double pi = std::numbers::pi;
  return {pi / 8, pi / 4 + pi / 8, pi / 2 + pi / 8, 3 * pi / 4 + pi / 8};
}

inline std::vector<double> default_phi_grid() {
  const double pi = std::numbers::pi;
  std::vector<double> out;
  for (int k = 0; k < 5; ++k) out.push_back(2 * pi * k / 5 + pi / 8);
  return out;
}

}  // namespace qsips
