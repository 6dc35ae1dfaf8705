// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations. Everything in here is written as a
// literal transcription of the defining formula, independent of the library
// code paths it is used to check.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "uq/tensor.hpp"

namespace testref {

/// Max over coordinates of |analytic - central_fd| / (|central_fd| + 1e-8).
inline double max_grad_rel_err(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, const std::vector<double>& analytic,
    double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

inline uq::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                double lo = -1.0, double hi = 1.0) {
  uq::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

inline uq::LabelField random_labels(std::size_t h, std::size_t w, std::size_t classes,
                                    std::mt19937_64& rng) {
  uq::LabelField labels(h, w);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(classes) - 1);
  for (auto& id : labels.ids) id = static_cast<std::uint8_t>(cls(rng));
  return labels;
}

inline uq::Tensor random_prob_field(std::size_t classes, std::size_t h, std::size_t w,
                                    std::mt19937_64& rng) {
  uq::Tensor t({classes, h, w});
  std::uniform_real_distribution<double> dist(0.01, 1.0);
  const std::size_t plane = h * w;
  for (std::size_t px = 0; px < plane; ++px) {
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      t.data[c * plane + px] = dist(rng);
      sum += t.data[c * plane + px];
    }
    for (std::size_t c = 0; c < classes; ++c) t.data[c * plane + px] /= sum;
  }
  return t;
}

// ---- literal metric transcriptions ----

inline double naive_dice_class(const uq::LabelField& pred, const uq::LabelField& gt,
                               std::uint8_t c) {
  double inter = 0.0, psz = 0.0, gsz = 0.0;
  for (std::size_t y = 0; y < pred.h; ++y)
    for (std::size_t x = 0; x < pred.w; ++x) {
      const bool p = pred.at(y, x) == c, g = gt.at(y, x) == c;
      if (p) psz += 1.0;
      if (g) gsz += 1.0;
      if (p && g) inter += 1.0;
    }
  if (psz + gsz == 0.0) return 1.0;
  return 2.0 * inter / (psz + gsz);
}

inline double naive_nll(const uq::Tensor& probs, const uq::LabelField& gt) {
  double acc = 0.0;
  for (std::size_t y = 0; y < gt.h; ++y)
    for (std::size_t x = 0; x < gt.w; ++x) {
      double p = probs(gt.at(y, x), y, x);
      if (p < 1e-12) p = 1e-12;
      acc += -std::log(p);
    }
  return acc / static_cast<double>(gt.h * gt.w);
}

inline double naive_brier(const uq::Tensor& probs, const uq::LabelField& gt) {
  const std::size_t classes = probs.dim(0);
  double acc = 0.0;
  for (std::size_t y = 0; y < gt.h; ++y)
    for (std::size_t x = 0; x < gt.w; ++x)
      for (std::size_t c = 0; c < classes; ++c) {
        const double onehot = (c == gt.at(y, x)) ? 1.0 : 0.0;
        const double diff = probs(c, y, x) - onehot;
        acc += diff * diff;
      }
  return acc / static_cast<double>(gt.h * gt.w);
}

inline double naive_ece(const uq::Tensor& probs, const uq::LabelField& gt,
                        std::size_t bins) {
  const std::size_t classes = probs.dim(0);
  std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t y = 0; y < gt.h; ++y)
    for (std::size_t x = 0; x < gt.w; ++x) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (probs(c, y, x) > probs(best, y, x)) best = c;
      const double conf = probs(best, y, x);
      std::size_t b = static_cast<std::size_t>(conf * static_cast<double>(bins));
      if (b >= bins) b = bins - 1;
      ++count[b];
      conf_sum[b] += conf;
      if (best == gt.at(y, x)) acc_sum[b] += 1.0;
    }
  const double total = static_cast<double>(gt.h * gt.w);
  double e = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const double n = static_cast<double>(count[b]);
    e += (n / total) * std::abs(acc_sum[b] / n - conf_sum[b] / n);
  }
  return e;
}

inline double naive_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline std::vector<double> naive_kde(const std::vector<double>& values,
                                     const std::vector<double>& grid, double h) {
  std::vector<double> density(grid.size(), 0.0);
  const double norm =
      1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * M_PI));
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (double v : values) {
      const double z = (grid[g] - v) / h;
      density[g] += norm * std::exp(-0.5 * z * z);
    }
  return density;
}

inline std::vector<std::size_t> naive_histogram(const std::vector<double>& values,
                                                std::size_t bins, double max_value) {
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    double c = v;
    if (c < 0.0) c = 0.0;
    if (c > max_value) c = max_value;
    std::size_t b = static_cast<std::size_t>(c / max_value * static_cast<double>(bins));
    if (b >= bins) b = bins - 1;
    ++counts[b];
  }
  return counts;
}

// 2x2 inverse via the adjugate; the matrix-inversion cross-check.
struct Naive2x2Posterior {
  double mean[2];
  double cov[4];
};

inline Naive2x2Posterior naive_linreg_posterior_2d(const std::vector<double>& x,
                                                   const std::vector<double>& y,
                                                   double alpha, double beta_n) {
  const std::size_t n = y.size();
  double a00 = alpha, a01 = 0.0, a11 = alpha;
  double b0 = 0.0, b1 = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    a00 += beta_n * x[2 * r] * x[2 * r];
    a01 += beta_n * x[2 * r] * x[2 * r + 1];
    a11 += beta_n * x[2 * r + 1] * x[2 * r + 1];
    b0 += beta_n * x[2 * r] * y[r];
    b1 += beta_n * x[2 * r + 1] * y[r];
  }
  const double det = a00 * a11 - a01 * a01;
  Naive2x2Posterior p;
  p.cov[0] = a11 / det;
  p.cov[1] = -a01 / det;
  p.cov[2] = -a01 / det;
  p.cov[3] = a00 / det;
  p.mean[0] = p.cov[0] * b0 + p.cov[1] * b1;
  p.mean[1] = p.cov[2] * b0 + p.cov[3] * b1;
  return p;
}

// Direct (non-separable) Gaussian blur with the same half-sample
// symmetric padding, built from the outer product of 1-D kernels.
inline uq::Tensor naive_blur_2d(const uq::Tensor& image, double sigma) {
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k1(2 * radius + 1);
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    k1[i + radius] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    sum += k1[i + radius];
  }
  for (auto& v : k1) v /= sum;

  auto reflect = [](long idx, long n) {
    const long period = 2 * n;
    long m = idx % period;
    if (m < 0) m += period;
    if (m >= n) m = period - 1 - m;
    return m;
  };

  const long c = static_cast<long>(image.dim(0));
  const long h = static_cast<long>(image.dim(1));
  const long w = static_cast<long>(image.dim(2));
  uq::Tensor out(image.shape);
  for (long ch = 0; ch < c; ++ch)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long ky = -radius; ky <= radius; ++ky)
          for (long kx = -radius; kx <= radius; ++kx) {
            const long sy = reflect(y + ky, h), sx = reflect(x + kx, w);
            acc += k1[ky + radius] * k1[kx + radius] *
                   image.data[(ch * h + sy) * w + sx];
          }
        out.data[(ch * h + y) * w + x] = acc;
      }
  return out;
}

/// Random tensor with |v| >= margin, for FD checks near kinked ops.
inline uq::Tensor random_tensor_away_from_zero(std::vector<std::size_t> shape,
                                               std::mt19937_64& rng,
                                               double margin = 0.05) {
  uq::Tensor t = random_tensor(std::move(shape), rng);
  for (auto& v : t.data) {
    if (std::abs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
  }
  return t;
}

}  // namespace testref
