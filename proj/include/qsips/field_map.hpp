#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "qsips/errors.hpp"

namespace qsips {

// Row-major 2D raster; at(ix, iy) addresses column ix of row iy.
template <typename T>
struct BasicMap {
  std::size_t width = 0;
  std::size_t height = 0;
  double pixel_pitch = 1.0;  // in original detector pixels
  std::vector<T> values;

  BasicMap() = default;
  BasicMap(std::size_t w, std::size_t h, double pitch = 1.0, T fill = T{})
      : width(w), height(h), pixel_pitch(pitch), values(w * h, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  T& at(std::size_t ix, std::size_t iy) { return values[iy * width + ix]; }
  const T& at(std::size_t ix, std::size_t iy) const { return values[iy * width + ix]; }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }

  bool same_shape(const BasicMap& o) const noexcept {
    return width == o.width && height == o.height;
  }

  void require_shape(std::size_t w, std::size_t h, const char* what) const {
    if (width != w || height != h) {
      throw ContractError(std::string(what) + ": shape " + std::to_string(width) + "x" +
                          std::to_string(height) + " != expected " + std::to_string(w) + "x" +
                          std::to_string(h));
    }
  }

  bool operator==(const BasicMap&) const = default;
};

using FieldMap = BasicMap<double>;
using ComplexMap = BasicMap<std::complex<double>>;

}  // namespace qsips
