// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uq/errors.hpp"
#include "uq/rng.hpp"
#include "uq/tensor.hpp"

namespace uq {

// ---------------------------------------------------------------------------
// Gaussian blur: separable kernel, radius ceil(3 sigma), half-sample
// symmetric (reflect) padding. Sum-preserving, so mean intensity is kept.
// ---------------------------------------------------------------------------

namespace detail {

// Half-sample symmetric fold of an arbitrary index into [0, n).
inline std::size_t reflect_index(long idx, long n) {
  const long period = 2 * n;
  long m = idx % period;
  if (m < 0) m += period;
  if (m >= n) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[i + radius] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace detail

inline Tensor gaussian_blur(const Tensor& image, double sigma) {
  if (sigma < 0.0) throw ValidationError("blur sigma must be >= 0");
  if (image.rank() != 3) throw DimensionError("gaussian_blur expects [C x H x W]");
  if (sigma == 0.0) return image;

  const auto kernel = detail::gaussian_kernel(sigma);
  const long radius = static_cast<long>(kernel.size() / 2);
  const long c = static_cast<long>(image.dim(0));
  const long h = static_cast<long>(image.dim(1));
  const long w = static_cast<long>(image.dim(2));

  Tensor tmp(image.shape), out(image.shape);
  for (long ch = 0; ch < c; ++ch) {
    // horizontal pass
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] *
                 image.data[(ch * h + y) * w +
                            static_cast<long>(detail::reflect_index(x + k, w))];
        tmp.data[(ch * h + y) * w + x] = acc;
      }
    // vertical pass
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] *
                 tmp.data[(ch * h + static_cast<long>(detail::reflect_index(y + k, h))) * w + x];
        out.data[(ch * h + y) * w + x] = acc;
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotation about the image centre, bilinear interpolation, zero fill
// outside the field of view.
// ---------------------------------------------------------------------------

inline Tensor rotate(const Tensor& image, double angle_deg) {
  if (angle_deg < 0.0 || angle_deg >= 360.0)
    throw ValidationError("rotation angle must be in [0, 360)");
  if (image.rank() != 3) throw DimensionError("rotate expects [C x H x W]");
  if (angle_deg == 0.0) return image;

  const double theta = angle_deg * 3.14159265358979323846 / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const long c = static_cast<long>(image.dim(0));
  const long h = static_cast<long>(image.dim(1));
  const long w = static_cast<long>(image.dim(2));
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);

  Tensor out(image.shape, 0.0);
  for (long ch = 0; ch < c; ++ch)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        const double sx = cx + ct * dx + st * dy;
        const double sy = cy - st * dx + ct * dy;
        const long x0 = static_cast<long>(std::floor(sx));
        const long y0 = static_cast<long>(std::floor(sy));
        const double fx = sx - static_cast<double>(x0);
        const double fy = sy - static_cast<double>(y0);
        double acc = 0.0;
        for (int dyy = 0; dyy <= 1; ++dyy)
          for (int dxx = 0; dxx <= 1; ++dxx) {
            const long yy = y0 + dyy, xx = x0 + dxx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;  // air = 0
            const double wgt = (dxx ? fx : 1.0 - fx) * (dyy ? fy : 1.0 - fy);
            acc += wgt * image.data[(ch * h + yy) * w + xx];
          }
        out.data[(ch * h + y) * w + x] = acc;
      }
  return out;
}

/// Nearest-neighbour label rotation with the same geometry as rotate();
/// out-of-bounds pixels become background (0).
inline LabelField rotate_labels(const LabelField& labels, double angle_deg) {
  if (angle_deg == 0.0) return labels;
  const double theta = angle_deg * 3.14159265358979323846 / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const long h = static_cast<long>(labels.h), w = static_cast<long>(labels.w);
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);
  LabelField out(labels.h, labels.w, 0);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const long sx = static_cast<long>(std::lround(cx + ct * dx + st * dy));
      const long sy = static_cast<long>(std::lround(cy - st * dx + ct * dy));
      if (sx >= 0 && sx < w && sy >= 0 && sy < h)
        out.ids[y * w + x] = labels.ids[sy * w + sx];
    }
  return out;
}

// ---------------------------------------------------------------------------
// Occlusion: axis-aligned rectangles of zeros at seeded positions.
// ---------------------------------------------------------------------------

struct OccludeResult {
  Tensor image;
  std::vector<std::uint8_t> mask;  // 1 where occluded, H*W
};

inline OccludeResult occlude(const Tensor& image, std::size_t num_rects,
                             std::size_t size_min, std::size_t size_max,
                             std::uint64_t seed) {
  if (image.rank() != 3) throw DimensionError("occlude expects [C x H x W]");
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (size_min < 1 || size_max < size_min || size_max > h || size_max > w)
    throw ValidationError("occlusion rectangle size out of range for image");
  OccludeResult r{image, std::vector<std::uint8_t>(h * w, 0)};
  if (num_rects == 0) return r;

  auto rng = make_rng(derive_seed(seed, RngStream::occlusion));
  std::uniform_int_distribution<std::size_t> side(size_min, size_max);
  for (std::size_t i = 0; i < num_rects; ++i) {
    const std::size_t rw = side(rng), rh = side(rng);
    std::uniform_int_distribution<std::size_t> px(0, w - rw), py(0, h - rh);
    const std::size_t x0 = px(rng), y0 = py(rng);
    for (std::size_t y = y0; y < y0 + rh; ++y)
      for (std::size_t x = x0; x < x0 + rw; ++x) {
        r.mask[y * w + x] = 1;
        for (std::size_t c = 0; c < image.dim(0); ++c) r.image(c, y, x) = 0.0;
      }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Intensity remap: desk-scale proxy for a modality shift. For s < 1 the
// map (1-s)*v + s*v^gamma is monotone by construction; at s >= 1 it
// becomes the inverted gamma curve 1 - v^gamma, flipping the histogram.
// Operates on values clamped to [0, 1].
// ---------------------------------------------------------------------------

inline Tensor intensity_remap(const Tensor& image, double strength, double gamma = 2.0) {
  if (strength < 0.0) throw ValidationError("remap strength must be >= 0");
  if (strength == 0.0) return image;
  Tensor out = image;
  for (auto& v : out.data) {
    const double u = std::clamp(v, 0.0, 1.0);
    const double curved = std::pow(u, gamma);
    v = strength >= 1.0 ? 1.0 - curved : (1.0 - strength) * u + strength * curved;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kernel density estimate for intensity-distribution drift plots.
// ---------------------------------------------------------------------------

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

/// Gaussian-kernel KDE; default bandwidth is Scott's rule
/// h = std * n^(-1/5), floored at 1e-6 for degenerate inputs. The grid
/// spans [min - 4h, max + 4h].
inline KdeCurve kde(const std::vector<double>& values, std::size_t grid_size = 256,
                    double bandwidth = 0.0) {
  if (values.size() < 2) throw ValidationError("kde needs at least 2 values");
  if (grid_size < 2) throw ValidationError("kde grid must have at least 2 points");

  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;

  KdeCurve curve;
  curve.bandwidth = bandwidth > 0.0
                        ? bandwidth
                        : std::max(std::sqrt(var) * std::pow(n, -0.2), 1e-6);
  const double h = curve.bandwidth;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn - 4.0 * h, hi = *mx + 4.0 * h;
  const double step = (hi - lo) / static_cast<double>(grid_size - 1);

  curve.grid.resize(grid_size);
  curve.density.resize(grid_size);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * 3.14159265358979323846));
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double g = lo + step * static_cast<double>(i);
    curve.grid[i] = g;
    double acc = 0.0;
    for (double v : values) {
      const double z = (g - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    curve.density[i] = norm * acc;
  }
  return curve;
}

inline double trapezoid_integral(const KdeCurve& curve) {
  double acc = 0.0;
  for (std::size_t i = 1; i < curve.grid.size(); ++i)
    acc += 0.5 * (curve.density[i] + curve.density[i - 1]) *
           (curve.grid[i] - curve.grid[i - 1]);
  return acc;
}

// ---------------------------------------------------------------------------
// Declarative shift description.
// ---------------------------------------------------------------------------

enum class ShiftKind { none, blur, rotate, occlude, intensity_remap };

struct ShiftSpec {
  ShiftKind kind = ShiftKind::none;
  double level = 0.0;  // sigma px / degrees / rectangle count / strength
  std::uint64_t seed = 0;

  void validate() const {
    if (level < 0.0) throw ValidationError("shift level must be >= 0");
    if (kind == ShiftKind::none && level != 0.0)
      throw ValidationError("shift kind none requires level 0");
  }
};

inline std::string shift_kind_name(ShiftKind k) {
  switch (k) {
    case ShiftKind::none: return "none";
    case ShiftKind::blur: return "blur";
    case ShiftKind::rotate: return "rotate";
    case ShiftKind::occlude: return "occlude";
    case ShiftKind::intensity_remap: return "intensity_remap";
  }
  return "none";
}

inline ShiftKind parse_shift_kind(const std::string& name) {
  if (name == "none") return ShiftKind::none;
  if (name == "blur") return ShiftKind::blur;
  if (name == "rotate") return ShiftKind::rotate;
  if (name == "occlude") return ShiftKind::occlude;
  if (name == "intensity_remap") return ShiftKind::intensity_remap;
  throw ValidationError("unknown shift kind: " + name);
}

struct ShiftedSample {
  Tensor image;
  LabelField labels;
};

// Default occlusion rectangle sides relative to the image.
inline std::pair<std::size_t, std::size_t> occlusion_sides(std::size_t image_size) {
  return {std::max<std::size_t>(2, image_size / 8),
          std::max<std::size_t>(3, image_size / 4)};
}

/// Applies one shift to an (image, labels) pair. Rotation transforms the
/// labels with the image; other shifts leave labels untouched. Level 0 is
/// a bit-exact identity for every kind.
inline ShiftedSample apply_shift(const Tensor& image, const LabelField& labels,
                                 const ShiftSpec& spec) {
  spec.validate();
  if (spec.level == 0.0) return {image, labels};
  switch (spec.kind) {
    case ShiftKind::none:
      return {image, labels};
    case ShiftKind::blur:
      return {gaussian_blur(image, spec.level), labels};
    case ShiftKind::rotate:
      return {rotate(image, spec.level), rotate_labels(labels, spec.level)};
    case ShiftKind::occlude: {
      const auto [mn, mx] = occlusion_sides(image.dim(1));
      auto r = occlude(image, static_cast<std::size_t>(spec.level), mn, mx, spec.seed);
      return {std::move(r.image), labels};
    }
    case ShiftKind::intensity_remap:
      return {intensity_remap(image, spec.level), labels};
  }
  return {image, labels};
}

}  // namespace uq
