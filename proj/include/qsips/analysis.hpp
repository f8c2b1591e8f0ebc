#pragma once

// Gaussian PSF fitting, enhancement ratios, visibility and display
// conditioning (Fourier interpolation, blur, line cuts).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "qsips/errors.hpp"
#include "qsips/fft.hpp"
#include "qsips/field_map.hpp"
#include "qsips/scene.hpp"

namespace qsips {

// Rectangle of pixel indices [x0, x0 + width) x [y0, y0 + height); an empty
// ROI means the whole map.
struct Roi {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t width = 0;
  std::size_t height = 0;

  static Roi around(Point centre, double half_size, const FieldMap& map) {
    const double pitch = map.pixel_pitch;
    const auto lo = [&](double c) { return static_cast<std::size_t>(std::max(0.0, std::floor((c - half_size) / pitch))); };
    const auto hi = [&](double c, std::size_t n) {
      return std::min<std::size_t>(n, static_cast<std::size_t>(std::max(0.0, std::ceil((c + half_size) / pitch))) + 1);
    };
    Roi r;
    r.x0 = lo(centre.x);
    r.y0 = lo(centre.y);
    r.width = hi(centre.x, map.width) - r.x0;
    r.height = hi(centre.y, map.height) - r.y0;
    return r;
  }
};

struct GaussianFit {
  enum Param { kAmplitude, kX0, kY0, kSigmaX, kSigmaY, kOffset };

  double amplitude = 0.0;
  double x0 = 0.0;  // original-pixel units (index * pixel_pitch)
  double y0 = 0.0;
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double offset = 0.0;
  double residual_rms = 0.0;
  int iterations = 0;
  std::array<std::array<double, 6>, 6> covariance{};

  double stderr_of(Param p) const { return std::sqrt(std::max(0.0, covariance[p][p])); }
  double sigma() const { return std::sqrt(sigma_x * sigma_y); }
};

struct FitOptions {
  double relative_step = 1e-9;
  int max_iterations = 200;
  // Per-pixel standard errors of the map. When set, the covariance is the
  // sandwich (J^T J)^-1 J^T diag(se^2) J (J^T J)^-1 of the unweighted fit;
  // otherwise the residual-scaled s^2 (J^T J)^-1.
  const FieldMap* pixel_stderr = nullptr;
};

namespace detail {

inline double gaussian_model(const std::array<double, 6>& p, double x, double y,
                             std::array<double, 6>* grad = nullptr) {
  const double dx = x - p[1];
  const double dy = y - p[2];
  const double sx2 = p[3] * p[3];
  const double sy2 = p[4] * p[4];
  const double e = std::exp(-(dx * dx / (2 * sx2) + dy * dy / (2 * sy2)));
  if (grad) {
    const double ae = p[0] * e;
    (*grad)[0] = e;
    (*grad)[1] = ae * dx / sx2;
    (*grad)[2] = ae * dy / sy2;
    (*grad)[3] = ae * dx * dx / (sx2 * p[3]);
    (*grad)[4] = ae * dy * dy / (sy2 * p[4]);
    (*grad)[5] = 1.0;
  }
  return p[0] * e + p[5];
}

}  // namespace detail

// Analytic derivative of the fitted model, exposed for finite-difference
// checks.
inline std::array<double, 6> gaussian_model_gradient(const std::array<double, 6>& params, double x, double y) {
  std::array<double, 6> g{};
  detail::gaussian_model(params, x, y, &g);
  return g;
}

inline double gaussian_model_value(const std::array<double, 6>& params, double x, double y) {
  return detail::gaussian_model(params, x, y);
}

// Damped least-squares fit of A exp(-(dx^2/2sx^2 + dy^2/2sy^2)) + c.
inline GaussianFit gaussian_fit_2d(const FieldMap& map, Roi roi = {}, const FitOptions& options = {}) {
  if (roi.width == 0 || roi.height == 0) roi = {0, 0, map.width, map.height};
  if (roi.x0 + roi.width > map.width || roi.y0 + roi.height > map.height) {
    throw ContractError("gaussian_fit_2d: ROI exceeds map");
  }
  const std::size_t n = roi.width * roi.height;
  if (n < 7) throw ContractError("gaussian_fit_2d: ROI too small");
  const double pitch = map.pixel_pitch;
  std::vector<double> xs(n), ys(n), vs(n);
  for (std::size_t j = 0, i = 0; j < roi.height; ++j) {
    for (std::size_t k = 0; k < roi.width; ++k, ++i) {
      xs[i] = static_cast<double>(roi.x0 + k) * pitch;
      ys[i] = static_cast<double>(roi.y0 + j) * pitch;
      vs[i] = map.at(roi.x0 + k, roi.y0 + j);
      if (!std::isfinite(vs[i])) throw ContractError("gaussian_fit_2d: non-finite value in ROI");
    }
  }
  std::vector<double> var(n, 0.0);
  if (options.pixel_stderr) {
    const FieldMap& se = *options.pixel_stderr;
    if (!se.same_shape(map)) throw ContractError("gaussian_fit_2d: stderr map shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      const double e = se.at(roi.x0 + i % roi.width, roi.y0 + i / roi.width);
      if (!(e >= 0) || !std::isfinite(e)) throw ContractError("gaussian_fit_2d: invalid standard error in ROI");
      var[i] = e * e;
    }
  }

  // Start: offset from the ROI border median, peak sign from the larger
  // excursion, centroid and second moments of the excess.
  std::vector<double> border;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % roi.width;
    const std::size_t j = i / roi.width;
    if (k == 0 || j == 0 || k + 1 == roi.width || j + 1 == roi.height) border.push_back(vs[i]);
  }
  std::nth_element(border.begin(), border.begin() + static_cast<std::ptrdiff_t>(border.size() / 2), border.end());
  const double base = border[border.size() / 2];
  const auto [mn, mx] = std::minmax_element(vs.begin(), vs.end());
  const double sign = (*mx - base) >= (base - *mn) ? 1.0 : -1.0;
  double w_sum = 0, cx = 0, cy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::max(0.0, sign * (vs[i] - base));
    w_sum += w;
    cx += w * xs[i];
    cy += w * ys[i];
  }
  if (!(w_sum > 0)) throw FitFailure("gaussian_fit_2d: no peak above the ROI baseline", 0, 0.0);
  cx /= w_sum;
  cy /= w_sum;
  double vx = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::max(0.0, sign * (vs[i] - base));
    vx += w * (xs[i] - cx) * (xs[i] - cx);
    vy += w * (ys[i] - cy) * (ys[i] - cy);
  }
  std::array<double, 6> p{sign * (sign > 0 ? *mx - base : base - *mn), cx, cy,
                          std::max(std::sqrt(vx / w_sum), pitch * 0.5),
                          std::max(std::sqrt(vy / w_sum), pitch * 0.5), base};

  Eigen::MatrixXd J(static_cast<Eigen::Index>(n), 6);
  Eigen::VectorXd r(static_cast<Eigen::Index>(n));
  auto evaluate = [&](const std::array<double, 6>& q, bool with_jacobian) {
    double cost = 0.0;
    std::array<double, 6> g{};
    for (std::size_t i = 0; i < n; ++i) {
      const double m = detail::gaussian_model(q, xs[i], ys[i], with_jacobian ? &g : nullptr);
      const double res = m - vs[i];
      cost += res * res;
      if (with_jacobian) {
        r(static_cast<Eigen::Index>(i)) = res;
        for (int c = 0; c < 6; ++c) J(static_cast<Eigen::Index>(i), c) = g[static_cast<std::size_t>(c)];
      }
    }
    return cost;
  };

  double cost = evaluate(p, true);
  double lambda = 1e-3;
  double last_step = std::numeric_limits<double>::infinity();
  int it = 0;
  bool converged = false;
  for (; it < options.max_iterations; ++it) {
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd A = JtJ;
      for (int d = 0; d < 6; ++d) A(d, d) += lambda * std::max(JtJ(d, d), 1e-300);
      const Eigen::VectorXd delta = A.ldlt().solve(-g);
      std::array<double, 6> q = p;
      double step2 = 0.0, norm2 = 0.0;
      for (int d = 0; d < 6; ++d) {
        q[static_cast<std::size_t>(d)] += delta(d);
        // Scale-aware relative step: offsets and centres are compared with
        // the PSF width, which sets their natural scale.
        const double scale = (d == 1 || d == 2 || d == 5)
                                 ? (d == 5 ? std::abs(p[0]) : std::max(p[3], p[4]))
                                 : std::abs(p[static_cast<std::size_t>(d)]);
        const double s = std::max(scale, 1e-300);
        step2 += (delta(d) / s) * (delta(d) / s);
        norm2 += 1.0;
      }
      last_step = std::sqrt(step2 / norm2);
      if (!std::isfinite(last_step)) throw FitFailure("gaussian_fit_2d: non-finite step", it, last_step);
      if (last_step < options.relative_step) {
        converged = true;
        if (q[3] > 0 && q[4] > 0) p = q;
        break;
      }
      if (q[3] > 0 && q[4] > 0) {
        const double new_cost = evaluate(q, false);
        if (new_cost <= cost) {
          p = q;
          cost = new_cost;
          lambda = std::max(lambda * 0.3, 1e-12);
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
    if (converged) break;
    if (!accepted) {
      // Damping saturated without progress: the cost cannot be lowered.
      if (last_step < 1e3 * options.relative_step || lambda > 1e16) {
        converged = true;
        break;
      }
    }
    evaluate(p, true);
  }
  if (!converged) throw FitFailure("gaussian_fit_2d: no convergence", it, last_step);

  cost = evaluate(p, true);
  GaussianFit fit;
  fit.amplitude = p[0];
  fit.x0 = p[1];
  fit.y0 = p[2];
  fit.sigma_x = p[3];
  fit.sigma_y = p[4];
  fit.offset = p[5];
  fit.iterations = it;
  fit.residual_rms = std::sqrt(cost / static_cast<double>(n));
  const Eigen::MatrixXd bread = (J.transpose() * J).inverse();
  Eigen::MatrixXd cov;
  if (options.pixel_stderr) {
    const Eigen::MatrixXd meat = J.transpose() * Eigen::Map<const Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(n)).asDiagonal() * J;
    cov = bread * meat * bread;
  } else {
    cov = bread * (cost / static_cast<double>(n - 6));
  }
  for (int a = 0; a < 6; ++a) {
    for (int b = 0; b < 6; ++b) fit.covariance[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = cov(a, b);
  }
  return fit;
}

// Geometric mean of the per-axis width ratios reference / sr.
inline double enhancement_ratio(const GaussianFit& reference, const GaussianFit& sr) {
  return std::sqrt((reference.sigma_x / sr.sigma_x) * (reference.sigma_y / sr.sigma_y));
}

// First-order standard error of enhancement_ratio from both fits' covariances.
inline double enhancement_ratio_stderr(const GaussianFit& reference, const GaussianFit& sr) {
  auto log_var = [](const GaussianFit& f) {
    const auto& c = f.covariance;
    const double vx = c[GaussianFit::kSigmaX][GaussianFit::kSigmaX] / (f.sigma_x * f.sigma_x);
    const double vy = c[GaussianFit::kSigmaY][GaussianFit::kSigmaY] / (f.sigma_y * f.sigma_y);
    const double cxy = c[GaussianFit::kSigmaX][GaussianFit::kSigmaY] / (f.sigma_x * f.sigma_y);
    return 0.25 * (vx + vy + 2 * cxy);
  };
  return enhancement_ratio(reference, sr) * std::sqrt(std::max(0.0, log_var(reference) + log_var(sr)));
}

// Bilinear sample at (x, y) in map index units, clamped at the edges.
inline double bilinear(const FieldMap& map, double x, double y) {
  const double fx = std::clamp(x, 0.0, static_cast<double>(map.width - 1));
  const double fy = std::clamp(y, 0.0, static_cast<double>(map.height - 1));
  const auto ix = std::min(static_cast<std::size_t>(fx), map.width > 1 ? map.width - 2 : 0);
  const auto iy = std::min(static_cast<std::size_t>(fy), map.height > 1 ? map.height - 2 : 0);
  const double tx = map.width > 1 ? fx - static_cast<double>(ix) : 0.0;
  const double ty = map.height > 1 ? fy - static_cast<double>(iy) : 0.0;
  const std::size_t ix1 = map.width > 1 ? ix + 1 : ix;
  const std::size_t iy1 = map.height > 1 ? iy + 1 : iy;
  return (1 - tx) * (1 - ty) * map.at(ix, iy) + tx * (1 - ty) * map.at(ix1, iy) +
         (1 - tx) * ty * map.at(ix, iy1) + tx * ty * map.at(ix1, iy1);
}

// Bilinear profile from p1 to p2 (map index units), endpoints included.
inline std::vector<double> line_cut(const FieldMap& map, Point p1, Point p2, std::size_t n_samples) {
  if (n_samples < 2) throw ContractError("line_cut: need at least 2 samples");
  std::vector<double> out(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n_samples - 1);
    out[i] = bilinear(map, p1.x + t * (p2.x - p1.x), p1.y + t * (p2.y - p1.y));
  }
  return out;
}

struct Visibility {
  double raw = 0.0;       // may be negative (valley above the peaks)
  double reported = 0.0;  // raw clamped to [0, 1]
  bool resolved = false;  // raw > 0
};

// Midpoint-valley visibility between two peak positions given in
// original-pixel coordinates. The ratio is unchanged by negating the map, so
// maps whose emitters appear as negative extrema are handled as they are.
inline Visibility visibility(const FieldMap& map, Point a, Point b) {
  const double s = 1.0 / map.pixel_pitch;
  const double va = bilinear(map, a.x * s, a.y * s);
  const double vb = bilinear(map, b.x * s, b.y * s);
  const double valley = bilinear(map, 0.5 * (a.x + b.x) * s, 0.5 * (a.y + b.y) * s);
  const double peak = 0.5 * (va + vb);
  Visibility v;
  if (!(peak != 0.0) || !std::isfinite(peak)) {
    v.raw = -std::numeric_limits<double>::infinity();
    return v;
  }
  v.raw = (peak - valley) / peak;
  v.reported = std::clamp(v.raw, 0.0, 1.0);
  v.resolved = v.raw > 0.0;
  return v;
}

namespace detail {

// Destination indices and weights of each centred source bin when a centred
// spectrum of length n is embedded in one of length m >= n. The Nyquist bin
// of an even-length source is split between -n/2 and +n/2.
inline std::vector<std::vector<std::pair<std::size_t, double>>> pad_map(std::size_t n, std::size_t m) {
  std::vector<std::vector<std::pair<std::size_t, double>>> out(n);
  const auto cn = static_cast<long>(n / 2);
  const auto cm = static_cast<long>(m / 2);
  for (std::size_t c = 0; c < n; ++c) {
    const long k = static_cast<long>(c) - cn;
    if (n % 2 == 0 && k == -cn && m > n) {
      out[c].push_back({static_cast<std::size_t>(cm - cn), 0.5});
      out[c].push_back({static_cast<std::size_t>(cm + cn), 0.5});
    } else {
      out[c].push_back({static_cast<std::size_t>(cm + k), 1.0});
    }
  }
  return out;
}

}  // namespace detail

// Zero-pads a centred spectrum from (w, h) to (fw, fh), with unitary
// amplitude preserved in real space.
inline ComplexMap pad_spectrum(const ComplexMap& spectrum, std::size_t factor) {
  const std::size_t W = spectrum.width * factor;
  const std::size_t H = spectrum.height * factor;
  ComplexMap out(W, H, spectrum.pixel_pitch / static_cast<double>(factor));
  const auto mx = detail::pad_map(spectrum.width, W);
  const auto my = detail::pad_map(spectrum.height, H);
  const double gain = static_cast<double>(factor);
  for (std::size_t y = 0; y < spectrum.height; ++y) {
    for (std::size_t x = 0; x < spectrum.width; ++x) {
      for (const auto& [dy, wy] : my[y]) {
        for (const auto& [dx, wx] : mx[x]) out.at(dx, dy) += spectrum.at(x, y) * (wx * wy * gain);
      }
    }
  }
  return out;
}

// Band-limited upsampling by an integer factor; output sample i sits at
// original coordinate i / factor.
inline FieldMap fourier_interpolate(const FieldMap& map, std::size_t factor) {
  if (factor < 1) throw ContractError("fourier_interpolate: factor must be >= 1");
  if (factor == 1) return map;
  return real_part(ifft2_centered(pad_spectrum(fft2_centered(map), factor)));
}

// Gaussian blur by spectrum multiplication; sigma in map pixels.
inline FieldMap gaussian_blur(const FieldMap& map, double sigma) {
  if (!(sigma >= 0.0)) throw ContractError("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return map;
  ComplexMap s = fft2_centered(map);
  for (std::size_t y = 0; y < s.height; ++y) {
    const double fy = centered_frequency(y, s.height);
    for (std::size_t x = 0; x < s.width; ++x) {
      const double fx = centered_frequency(x, s.width);
      s.at(x, y) *= std::exp(-2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma * (fx * fx + fy * fy));
    }
  }
  return real_part(ifft2_centered(s));
}

}  // namespace qsips
