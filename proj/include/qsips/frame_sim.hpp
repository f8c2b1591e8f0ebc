#pragma once

// Monte-Carlo photon-count frames and the exact per-pixel law they sample.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qsips/combinatorics.hpp"
#include "qsips/errors.hpp"
#include "qsips/estimator.hpp"
#include "qsips/moments.hpp"
#include "qsips/parallel.hpp"
#include "qsips/photon_models.hpp"
#include "qsips/rng.hpp"
#include "qsips/scene.hpp"

namespace qsips {

struct FrameStack {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t n_frames = 0;
  std::vector<double> values;  // frame-major, row-major

  std::size_t frame_size() const noexcept { return width * height; }

  std::span<const double> frame(std::size_t f) const {
    return {values.data() + f * frame_size(), frame_size()};
  }
  std::span<double> frame(std::size_t f) { return {values.data() + f * frame_size(), frame_size()}; }

  bool operator==(const FrameStack&) const = default;
};

struct RngSpec {
  std::uint64_t seed = 0;
  // Added to the frame counter; lets a stack continue another one's stream.
  std::uint64_t frame_offset = 0;
};

enum class Allocation {
  Independent,  // each pixel draws Binomial(k, eta) on its own
  Multinomial,  // each photon lands in at most one pixel
};

struct SimOptions {
  Allocation allocation = Allocation::Independent;
  PmfOptions pmf;
  std::size_t max_stack_bytes = std::size_t{4} << 30;
  std::size_t chunk_frames = 1024;  // streaming granularity; fixes merge order
  int workers = 1;
};

namespace detail {

// Per-emitter tables reused by every frame of a pattern.
struct EmitterTables {
  std::vector<double> cdf;  // photon-number CDF of the emitted law
  double excitation = 1.0;  // illumination transmittance at the emitter
  std::vector<double> eta;  // detection field
  double eta_total = 0.0;
};

inline std::vector<EmitterTables> build_tables(const Scene& scene, const IlluminationPattern& pattern,
                                               const SimOptions& options) {
  scene.validate();
  std::vector<EmitterTables> tables(scene.emitters.size());
  for (std::size_t a = 0; a < scene.emitters.size(); ++a) {
    const Emitter& e = scene.emitters[a];
    const auto dist = pmf(e.model, options.pmf);
    auto& t = tables[a];
    t.cdf.resize(dist.size());
    double acc = 0.0;
    for (std::size_t m = 0; m < dist.size(); ++m) {
      acc += dist[m];
      t.cdf[m] = acc;
    }
    t.cdf.back() = 1.0;
    t.excitation = illumination_weight(pattern, e.position);
    t.eta = detection_field(scene, a);
    for (double v : t.eta) t.eta_total += v;
    if (options.allocation == Allocation::Multinomial && t.eta_total > 1.0 + 1e-12) {
      throw ContractError("multinomial allocation needs detection probabilities summing to <= 1 (emitter " +
                          std::to_string(a) + " sums to " + std::to_string(t.eta_total) + ")");
    }
  }
  return tables;
}

inline void draw_frame(const Scene& scene, const std::vector<EmitterTables>& tables,
                       const SimOptions& options, std::uint64_t seed, std::uint64_t frame_counter,
                       std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t a = 0; a < tables.size(); ++a) {
    const auto& t = tables[a];
    SplitMix64 rng(stream_key(seed, frame_counter, a, kNoPixel));
    const double u = rng.uniform();
    const auto m = static_cast<std::uint64_t>(std::upper_bound(t.cdf.begin(), t.cdf.end(), u) - t.cdf.begin());
    const std::uint64_t k = sample_binomial(rng, std::min<std::uint64_t>(m, t.cdf.size() - 1), t.excitation);
    if (k == 0) continue;
    if (options.allocation == Allocation::Independent) {
      for (std::size_t px = 0; px < out.size(); ++px) {
        if (t.eta[px] <= 0.0) continue;
        SplitMix64 prng(stream_key(seed, frame_counter, a, px));
        out[px] += static_cast<double>(sample_binomial(prng, k, t.eta[px]));
      }
    } else {
      // Sequential conditional binomials give the multinomial split.
      std::uint64_t remaining = k;
      double mass_left = 1.0;
      for (std::size_t px = 0; px < out.size() && remaining > 0; ++px) {
        const double p = t.eta[px];
        if (p <= 0.0) continue;
        const double cond = mass_left > 0.0 ? std::min(1.0, p / mass_left) : 1.0;
        const std::uint64_t x = sample_binomial(rng, remaining, cond);
        out[px] += static_cast<double>(x);
        remaining -= x;
        mass_left -= p;
      }
    }
  }
  if (scene.readout_rms > 0.0) {
    for (std::size_t px = 0; px < out.size(); ++px) {
      SplitMix64 rng(stream_key(seed, frame_counter, kReadoutStream, px));
      out[px] += scene.readout_rms * rng.normal();
    }
  }
}

}  // namespace detail

// One frame; `frame_index` selects the counter-based stream.
inline std::vector<double> sample_frame(const Scene& scene, const IlluminationPattern& pattern,
                                        const RngSpec& rng, std::uint64_t frame_index,
                                        const SimOptions& options = {}) {
  const auto tables = detail::build_tables(scene, pattern, options);
  std::vector<double> out(scene.pixel_count());
  detail::draw_frame(scene, tables, options, rng.seed, rng.frame_offset + frame_index, out);
  return out;
}

inline FrameStack sample_stack(const Scene& scene, const IlluminationPattern& pattern,
                               std::size_t n_frames, const RngSpec& rng,
                               const SimOptions& options = {}) {
  if (n_frames < 1) throw ContractError("sample_stack: n_frames must be >= 1");
  const std::size_t px = scene.pixel_count();
  if (px != 0 && n_frames > options.max_stack_bytes / sizeof(double) / px) {
    throw CapacityError("sample_stack: " + std::to_string(n_frames) + " frames of " +
                        std::to_string(px) + " pixels exceed the stack memory cap");
  }
  const auto tables = detail::build_tables(scene, pattern, options);
  FrameStack stack{scene.width, scene.height, n_frames, std::vector<double>(n_frames * px)};
  parallel_for(n_frames, resolve_workers(options.workers), [&](std::size_t f) {
    detail::draw_frame(scene, tables, options, rng.seed, rng.frame_offset + f, stack.frame(f));
  });
  return stack;
}

// Streams frames straight into a moment accumulator without holding the
// stack. Chunks are merged in index order, so the result does not depend on
// the worker count.
inline MomentAccumulator accumulate_simulated(const Scene& scene, const IlluminationPattern& pattern,
                                              std::size_t n_frames, const RngSpec& rng, int j_max,
                                              const SimOptions& options = {},
                                              bool track_factorial = false) {
  if (n_frames < 1) throw ContractError("accumulate_simulated: n_frames must be >= 1");
  const auto tables = detail::build_tables(scene, pattern, options);
  const std::size_t chunk = std::max<std::size_t>(1, options.chunk_frames);
  const std::size_t n_chunks = (n_frames + chunk - 1) / chunk;
  std::vector<MomentAccumulator> parts(n_chunks);
  parallel_for(n_chunks, resolve_workers(options.workers), [&](std::size_t c) {
    MomentAccumulator acc(scene.width, scene.height, j_max, track_factorial);
    std::vector<double> frame(scene.pixel_count());
    const std::size_t end = std::min(n_frames, (c + 1) * chunk);
    for (std::size_t f = c * chunk; f < end; ++f) {
      detail::draw_frame(scene, tables, options, rng.seed, rng.frame_offset + f, frame);
      acc.accumulate(frame);
    }
    parts[c] = std::move(acc);
  });
  MomentAccumulator total = std::move(parts[0]);
  for (std::size_t c = 1; c < n_chunks; ++c) total.merge(parts[c]);
  return total;
}

inline MomentAccumulator accumulate_stack(const FrameStack& stack, int j_max,
                                          bool track_factorial = false) {
  MomentAccumulator acc(stack.width, stack.height, j_max, track_factorial);
  for (std::size_t f = 0; f < stack.n_frames; ++f) acc.accumulate(stack.frame(f));
  return acc;
}

// ---------------------------------------------------------------------------
// Exact oracles

inline constexpr double kExactTailTolerance = 1e-10;

// Pre-readout count law at pixel (ix, iy), truncated at n_cap photons.
inline PhotonDistribution exact_pixel_distribution(const Scene& scene, const IlluminationPattern& pattern,
                                                   std::size_t ix, std::size_t iy, std::size_t n_cap,
                                                   const PmfOptions& pmf_options = {}) {
  scene.validate();
  PhotonDistribution total;
  for (std::size_t a = 0; a < scene.emitters.size(); ++a) {
    const Emitter& e = scene.emitters[a];
    const double w = illumination_weight(pattern, e.position) * detection_prob(scene, a, ix, iy);
    auto single = binomial_thin(pmf(e.model, pmf_options), w).trimmed();
    total = convolve(total, single).trimmed();
  }
  if (total.size() > n_cap + 1) {
    const auto p = total.probs();
    CompensatedSum<long double> tail;
    for (std::size_t m = n_cap + 1; m < p.size(); ++m) tail.add(p[m]);
    if (static_cast<double>(tail.value()) >= kExactTailTolerance) {
      throw CapacityError("exact_pixel_distribution: tail mass " +
                          std::to_string(static_cast<double>(tail.value())) + " beyond n_cap " +
                          std::to_string(n_cap));
    }
    return PhotonDistribution::normalized({p.begin(), p.begin() + static_cast<std::ptrdiff_t>(n_cap + 1)});
  }
  return total;
}

namespace detail {

// Sgurzants (factorial cumulants) of every emitter's emitted law.
inline std::vector<std::vector<double>> emitter_sgurzants(const Scene& scene, int j_max,
                                                          const PmfOptions& pmf_options) {
  std::vector<std::vector<double>> out;
  out.reserve(scene.emitters.size());
  for (const auto& e : scene.emitters) out.push_back(sgurzants(pmf(e.model, pmf_options), j_max));
  return out;
}

// Factorial cumulants of the pixel law: thinning scales order i by w^i and
// independent emitters add.
inline std::vector<long double> pixel_factorial_cumulants(const Scene& scene,
                                                          const IlluminationPattern& pattern,
                                                          const std::vector<std::vector<double>>& sg,
                                                          std::size_t ix, std::size_t iy, int j_max) {
  std::vector<long double> kappa(static_cast<std::size_t>(j_max), 0.0L);
  for (std::size_t a = 0; a < scene.emitters.size(); ++a) {
    const long double w = static_cast<long double>(illumination_weight(pattern, scene.emitters[a].position)) *
                          detection_prob(scene, a, ix, iy);
    long double wp = 1.0L;
    for (int i = 0; i < j_max; ++i) {
      wp *= w;
      kappa[i] += wp * sg[a][i];
    }
  }
  return kappa;
}

}  // namespace detail

// Exact cumulants k^(1..j_max) at one pixel, readout variance included.
inline std::vector<double> exact_pixel_cumulants(const Scene& scene, const IlluminationPattern& pattern,
                                                 std::size_t ix, std::size_t iy, int j_max,
                                                 const PmfOptions& pmf_options = {}) {
  scene.validate();
  const auto sg = detail::emitter_sgurzants(scene, j_max, pmf_options);
  const auto kappa = detail::pixel_factorial_cumulants(scene, pattern, sg, ix, iy, j_max);
  std::vector<double> k(static_cast<std::size_t>(j_max));
  for (int j = 1; j <= j_max; ++j) {
    long double acc = 0.0L;
    for (int i = 1; i <= j; ++i) acc += static_cast<long double>(stirling_second(j, i)) * kappa[i - 1];
    k[j - 1] = static_cast<double>(acc);
  }
  if (j_max >= 2) k[1] += scene.readout_rms * scene.readout_rms;
  return k;
}

// Exact cumulant maps over the whole grid (count = 0 marks an exact stack).
inline CumulantStack exact_cumulant_stack(const Scene& scene, const IlluminationPattern& pattern,
                                          int j_max, const PmfOptions& pmf_options = {}) {
  scene.validate();
  const auto sg = detail::emitter_sgurzants(scene, j_max, pmf_options);
  CumulantStack out = CumulantStack::zeros(scene.width, scene.height, j_max);
  const double readout_var = scene.readout_rms * scene.readout_rms;
  for (std::size_t iy = 0; iy < scene.height; ++iy) {
    for (std::size_t ix = 0; ix < scene.width; ++ix) {
      const auto kappa = detail::pixel_factorial_cumulants(scene, pattern, sg, ix, iy, j_max);
      for (int j = 1; j <= j_max; ++j) {
        long double acc = 0.0L;
        for (int i = 1; i <= j; ++i) acc += static_cast<long double>(stirling_second(j, i)) * kappa[i - 1];
        if (j == 2) acc += readout_var;
        out.k[static_cast<std::size_t>(j - 1)].at(ix, iy) = static_cast<double>(acc);
      }
    }
  }
  return out;
}

// Exact factorial moments <N (N-1) ... (N-j+1)> maps of the noiseless law.
inline std::vector<FieldMap> exact_factorial_moment_maps(const Scene& scene,
                                                         const IlluminationPattern& pattern, int j_max,
                                                         const PmfOptions& pmf_options = {}) {
  scene.validate();
  const auto sg = detail::emitter_sgurzants(scene, j_max, pmf_options);
  std::vector<FieldMap> out(static_cast<std::size_t>(j_max), FieldMap(scene.width, scene.height));
  for (std::size_t iy = 0; iy < scene.height; ++iy) {
    for (std::size_t ix = 0; ix < scene.width; ++ix) {
      const auto kappa = detail::pixel_factorial_cumulants(scene, pattern, sg, ix, iy, j_max);
      const auto fm = moments_from_cumulants<long double>(kappa);
      for (int j = 0; j < j_max; ++j) out[static_cast<std::size_t>(j)].at(ix, iy) = static_cast<double>(fm[j]);
    }
  }
  return out;
}

}  // namespace qsips
