#pragma once

// Unitary 2D DFT with the zero frequency at the array centre, on FFTW.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <new>

#include "qsips/field_map.hpp"

namespace qsips {

namespace detail {

// FFTW's planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : data(fftw_alloc_complex(n)) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

struct FftwPlan {
  FftwPlan(std::size_t height, std::size_t width, fftw_complex* in, fftw_complex* out, int sign) {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), in, out, sign, FFTW_ESTIMATE);
  }
  ~FftwPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
  fftw_plan plan;
};

inline ComplexMap dft2(const ComplexMap& in, int sign, bool centre_output) {
  const std::size_t w = in.width;
  const std::size_t h = in.height;
  const std::size_t n = w * h;
  FftwBuffer buf(n);
  FftwPlan plan(h, w, buf.data, buf.data, sign);
  const std::size_t cx = w / 2;
  const std::size_t cy = h / 2;
  // Forward: natural-order input, centred output. Backward: centred input,
  // natural-order output.
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t sx = x;
      std::size_t sy = y;
      if (!centre_output) {
        sx = (x + cx) % w;
        sy = (y + cy) % h;
      }
      const auto v = in.at(sx, sy);
      buf.data[y * w + x][0] = v.real();
      buf.data[y * w + x][1] = v.imag();
    }
  }
  fftw_execute(plan.plan);
  ComplexMap out(w, h, in.pixel_pitch);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t dx = x;
      std::size_t dy = y;
      if (centre_output) {
        dx = (x + cx) % w;
        dy = (y + cy) % h;
      }
      out.at(dx, dy) = {buf.data[y * w + x][0] * scale, buf.data[y * w + x][1] * scale};
    }
  }
  return out;
}

}  // namespace detail

// Spectrum with DC at (width/2, height/2).
inline ComplexMap fft2_centered(const ComplexMap& image) { return detail::dft2(image, FFTW_FORWARD, true); }

inline ComplexMap fft2_centered(const FieldMap& image) {
  ComplexMap c(image.width, image.height, image.pixel_pitch);
  for (std::size_t i = 0; i < image.size(); ++i) c[i] = image[i];
  return fft2_centered(c);
}

inline ComplexMap ifft2_centered(const ComplexMap& spectrum) {
  return detail::dft2(spectrum, FFTW_BACKWARD, false);
}

inline FieldMap real_part(const ComplexMap& c) {
  FieldMap out(c.width, c.height, c.pixel_pitch);
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

// Frequency (cycles per sample) of centred index i along an axis of length n.
inline double centered_frequency(std::size_t i, std::size_t n) {
  return (static_cast<double>(i) - static_cast<double>(n / 2)) / static_cast<double>(n);
}

}  // namespace qsips
