#pragma once

// Binary containers (QSTK stacks, QMAP rasters), CSV tables and 16-bit PGM
// previews.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "qsips/errors.hpp"
#include "qsips/estimator.hpp"
#include "qsips/field_map.hpp"
#include "qsips/frame_sim.hpp"

namespace qsips {

namespace detail {

template <typename T>
T byteswap_if_needed(T v) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    v = byteswap_if_needed(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void put_magic(const char (&m)[5]) { buf_.append(m, 4); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& data) : data_(data) {}

  template <typename T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > data_.size()) {
      throw FormatError(std::string("truncated ") + what, data_.size());
    }
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_needed(v);
  }

  void expect_magic(const char (&m)[5]) {
    if (data_.size() < 4) throw FormatError("truncated magic", data_.size());
    if (std::memcmp(data_.data(), m, 4) != 0) throw FormatError(std::string("bad magic, expected ") + m, 0);
    pos_ = 4;
  }

  std::uint64_t pos() const noexcept { return pos_; }
  std::uint64_t size() const noexcept { return data_.size(); }

  void require_remaining(std::uint64_t bytes, const char* what) const {
    if (data_.size() - pos_ < bytes) throw FormatError(std::string("truncated ") + what, data_.size());
    if (data_.size() - pos_ > bytes) throw FormatError(std::string("trailing bytes after ") + what, pos_ + bytes);
  }

 private:
  const std::string& data_;
  std::uint64_t pos_ = 0;
};

inline std::uint32_t checked_u32(std::uint64_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw CapacityError(std::string(what) + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// QSTK: magic, u16 version, u16 dtype, u32 width, u32 height, u32 n_frames,
// u32 reserved (24 bytes), then little-endian f64 frames.

inline constexpr std::uint16_t kQstkVersion = 1;
inline constexpr std::size_t kQstkHeaderBytes = 24;

struct QstkHeader {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t n_frames = 0;
  std::uint32_t reserved = 0;
};

inline std::string encode_qstk(const QstkHeader& h, const std::vector<double>& payload) {
  detail::ByteWriter w;
  w.put_magic("QSTK");
  w.put<std::uint16_t>(kQstkVersion);
  w.put<std::uint16_t>(0);
  w.put(h.width);
  w.put(h.height);
  w.put(h.n_frames);
  w.put(h.reserved);
  for (double v : payload) w.put(v);
  return w.take();
}

inline std::vector<double> decode_qstk(const std::string& bytes, QstkHeader& h) {
  detail::ByteReader r(bytes);
  r.expect_magic("QSTK");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kQstkVersion) throw FormatError("unsupported QSTK version " + std::to_string(version), 4);
  const auto dtype = r.get<std::uint16_t>("dtype");
  if (dtype != 0) throw FormatError("unsupported QSTK dtype " + std::to_string(dtype), 6);
  h.width = r.get<std::uint32_t>("width");
  h.height = r.get<std::uint32_t>("height");
  h.n_frames = r.get<std::uint32_t>("n_frames");
  h.reserved = r.get<std::uint32_t>("reserved");
  if (h.width == 0 || h.height == 0) throw FormatError("zero QSTK dimension", 8);
  const std::uint64_t count = std::uint64_t{h.width} * h.height * h.n_frames;
  if (count > (r.size() - r.pos()) / 8 + 1) throw FormatError("truncated QSTK payload", r.size());
  r.require_remaining(count * 8, "QSTK payload");
  std::vector<double> out(count);
  for (auto& v : out) v = r.get<double>("payload");
  return out;
}

inline std::string encode_frame_stack(const FrameStack& s) {
  return encode_qstk({detail::checked_u32(s.width, "width"), detail::checked_u32(s.height, "height"),
                      detail::checked_u32(s.n_frames, "n_frames"), 0},
                     s.values);
}

inline FrameStack decode_frame_stack(const std::string& bytes) {
  QstkHeader h;
  auto values = decode_qstk(bytes, h);
  return {h.width, h.height, h.n_frames, std::move(values)};
}

// Cumulant stacks reuse the container: n_frames holds the order count and
// reserved the number of frames behind the estimate.
inline std::string encode_cumulant_stack(const CumulantStack& s) {
  std::vector<double> payload;
  payload.reserve(s.width * s.height * s.k.size());
  for (const auto& m : s.k) payload.insert(payload.end(), m.values.begin(), m.values.end());
  return encode_qstk({detail::checked_u32(s.width, "width"), detail::checked_u32(s.height, "height"),
                      detail::checked_u32(s.k.size(), "orders"), detail::checked_u32(s.count, "frame count")},
                     payload);
}

inline CumulantStack decode_cumulant_stack(const std::string& bytes) {
  QstkHeader h;
  const auto values = decode_qstk(bytes, h);
  CumulantStack s = CumulantStack::zeros(h.width, h.height, static_cast<int>(h.n_frames));
  s.count = h.reserved;
  const std::size_t plane = std::size_t{h.width} * h.height;
  for (std::size_t j = 0; j < h.n_frames; ++j) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(j * plane), plane, s.k[j].values.begin());
  }
  return s;
}

inline void write_frame_stack(const std::filesystem::path& p, const FrameStack& s) { write_file(p, encode_frame_stack(s)); }
inline FrameStack read_frame_stack(const std::filesystem::path& p) { return decode_frame_stack(read_file(p)); }
inline void write_cumulant_stack(const std::filesystem::path& p, const CumulantStack& s) {
  write_file(p, encode_cumulant_stack(s));
}
inline CumulantStack read_cumulant_stack(const std::filesystem::path& p) { return decode_cumulant_stack(read_file(p)); }

// ---------------------------------------------------------------------------
// QMAP: magic, u16 version, u16 dtype (0 f64, 1 complex as real+imag
// planes), u32 width, u32 height, u32 planes, f64 pixel_pitch (28 bytes).

inline constexpr std::uint16_t kQmapVersion = 1;

struct MapFile {
  std::uint16_t dtype = 0;
  std::vector<FieldMap> planes;
};

inline std::string encode_map_planes(const std::vector<FieldMap>& planes, std::uint16_t dtype) {
  if (planes.empty()) throw ContractError("QMAP: no planes");
  const FieldMap& ref = planes.front();
  detail::ByteWriter w;
  w.put_magic("QMAP");
  w.put<std::uint16_t>(kQmapVersion);
  w.put<std::uint16_t>(dtype);
  w.put(detail::checked_u32(ref.width, "width"));
  w.put(detail::checked_u32(ref.height, "height"));
  w.put(detail::checked_u32(planes.size(), "planes"));
  w.put(ref.pixel_pitch);
  for (const auto& p : planes) {
    if (!p.same_shape(ref)) throw ContractError("QMAP: planes differ in shape");
    for (double v : p.values) w.put(v);
  }
  return w.take();
}

inline std::string encode_field_map(const FieldMap& m) { return encode_map_planes({m}, 0); }

inline std::string encode_complex_map(const ComplexMap& m) {
  FieldMap re(m.width, m.height, m.pixel_pitch), im(m.width, m.height, m.pixel_pitch);
  for (std::size_t i = 0; i < m.size(); ++i) {
    re[i] = m[i].real();
    im[i] = m[i].imag();
  }
  return encode_map_planes({re, im}, 1);
}

inline MapFile decode_map(const std::string& bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic("QMAP");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kQmapVersion) throw FormatError("unsupported QMAP version " + std::to_string(version), 4);
  MapFile f;
  f.dtype = r.get<std::uint16_t>("dtype");
  if (f.dtype > 1) throw FormatError("unsupported QMAP dtype " + std::to_string(f.dtype), 6);
  const auto w = r.get<std::uint32_t>("width");
  const auto h = r.get<std::uint32_t>("height");
  const auto planes = r.get<std::uint32_t>("planes");
  const auto pitch = r.get<double>("pixel_pitch");
  if (w == 0 || h == 0) throw FormatError("zero QMAP dimension", 8);
  if (planes == 0 || (f.dtype == 1 && planes % 2 != 0)) throw FormatError("invalid QMAP plane count", 16);
  if (!(pitch > 0.0) || !std::isfinite(pitch)) throw FormatError("invalid QMAP pixel pitch", 20);
  const std::uint64_t count = std::uint64_t{w} * h * planes;
  if (count > (r.size() - r.pos()) / 8 + 1) throw FormatError("truncated QMAP payload", r.size());
  r.require_remaining(count * 8, "QMAP payload");
  for (std::uint32_t p = 0; p < planes; ++p) {
    FieldMap m(w, h, pitch);
    for (auto& v : m.values) v = r.get<double>("payload");
    f.planes.push_back(std::move(m));
  }
  return f;
}

inline FieldMap decode_field_map(const std::string& bytes) {
  auto f = decode_map(bytes);
  if (f.dtype != 0 || f.planes.size() != 1) throw FormatError("expected a single real QMAP plane", 6);
  return std::move(f.planes.front());
}

inline ComplexMap decode_complex_map(const std::string& bytes) {
  const auto f = decode_map(bytes);
  if (f.dtype != 1 || f.planes.size() != 2) throw FormatError("expected a complex QMAP", 6);
  ComplexMap m(f.planes[0].width, f.planes[0].height, f.planes[0].pixel_pitch);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = {f.planes[0][i], f.planes[1][i]};
  return m;
}

inline void write_field_map(const std::filesystem::path& p, const FieldMap& m) { write_file(p, encode_field_map(m)); }
inline FieldMap read_field_map(const std::filesystem::path& p) { return decode_field_map(read_file(p)); }
inline void write_complex_map(const std::filesystem::path& p, const ComplexMap& m) {
  write_file(p, encode_complex_map(m));
}

// ---------------------------------------------------------------------------
// Text outputs

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row_strings(header); }

  template <typename... Ts>
  void row(const Ts&... cells) {
    std::vector<std::string> out;
    (out.push_back(to_cell(cells)), ...);
    row_strings(out);
  }

  void row_strings(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw ContractError("CsvWriter: column count mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  const std::string& str() const noexcept { return text_; }
  void save(const std::filesystem::path& p) const { write_file(p, text_); }

 private:
  static std::string to_cell(const std::string& s) { return s; }
  static std::string to_cell(const char* s) { return s; }
  static std::string to_cell(double v) { return format_double(v); }
  template <typename T>
  static std::string to_cell(T v) requires std::is_integral_v<T> { return std::to_string(v); }

  std::size_t columns_;
  std::string text_;
};

// One line per pixel: ix, iy, k1..kJ.
inline std::string cumulant_csv(const CumulantStack& s) {
  std::vector<std::string> header{"ix", "iy"};
  for (int j = 1; j <= s.j_max(); ++j) header.push_back("k" + std::to_string(j));
  CsvWriter csv(header);
  for (std::size_t iy = 0; iy < s.height; ++iy) {
    for (std::size_t ix = 0; ix < s.width; ++ix) {
      std::vector<std::string> cells{std::to_string(ix), std::to_string(iy)};
      for (const auto& m : s.k) cells.push_back(format_double(m.at(ix, iy)));
      csv.row_strings(cells);
    }
  }
  return csv.str();
}

struct PgmScaling {
  double min = 0.0;
  double max = 0.0;
  bool clipped_negative = false;
};

// Binary 16-bit PGM with linear min-max scaling; the scaling is written to a
// sidecar `<path>.txt`.
inline PgmScaling write_pgm16(const std::filesystem::path& path, const FieldMap& map, bool clip_negative = true) {
  std::vector<double> v = map.values;
  if (clip_negative) {
    for (double& x : v) x = std::max(0.0, x);
  }
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  PgmScaling s{*lo_it, *hi_it, clip_negative};
  const double span = s.max > s.min ? s.max - s.min : 1.0;
  std::string out = "P5\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n65535\n";
  for (double x : v) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp((x - s.min) / span, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  write_file(path, out);
  write_file(path.string() + ".txt", "min " + format_double(s.min) + "\nmax " + format_double(s.max) +
                                         "\nclip_negative " + (clip_negative ? "1" : "0") + "\n");
  return s;
}

}  // namespace qsips
