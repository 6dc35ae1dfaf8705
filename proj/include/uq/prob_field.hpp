// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "uq/errors.hpp"
#include "uq/tensor.hpp"

namespace uq {

/// Per-pixel class probabilities [C x H x W]: the output of posterior
/// marginalization and the input to every metric.
struct ProbField {
  Tensor probs;

  ProbField() = default;
  explicit ProbField(Tensor t) : probs(std::move(t)) {
    if (probs.rank() != 3) throw DimensionError("ProbField expects [C x H x W]");
  }

  std::size_t classes() const { return probs.dim(0); }
  std::size_t height() const { return probs.dim(1); }
  std::size_t width() const { return probs.dim(2); }

  /// Checks entries in [0,1] and per-pixel sums within 1e-9 of 1.
  void validate() const {
    const std::size_t c = classes(), plane = height() * width();
    for (double v : probs.data)
      if (!(v >= 0.0 && v <= 1.0))
        throw ValidationError("probability outside [0, 1]");
    for (std::size_t px = 0; px < plane; ++px) {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += probs.data[k * plane + px];
      if (std::abs(s - 1.0) > 1e-9)
        throw ValidationError("per-pixel probabilities do not sum to 1");
    }
  }
};

/// Highest-probability class per pixel; ties resolve to the lowest id.
inline LabelField argmax_labels(const ProbField& field) {
  const std::size_t c = field.classes(), plane = field.height() * field.width();
  LabelField labels(field.height(), field.width());
  for (std::size_t px = 0; px < plane; ++px) {
    std::size_t best = 0;
    double bv = field.probs.data[px];
    for (std::size_t k = 1; k < c; ++k) {
      const double v = field.probs.data[k * plane + px];
      if (v > bv) {
        bv = v;
        best = k;
      }
    }
    labels.ids[px] = static_cast<std::uint8_t>(best);
  }
  return labels;
}

/// Natural-log predictive entropy per pixel, with 0 * log 0 := 0.
/// Bounded by [0, ln C].
inline Tensor predictive_entropy(const ProbField& field) {
  const std::size_t c = field.classes(), plane = field.height() * field.width();
  Tensor h({field.height(), field.width()});
  for (std::size_t px = 0; px < plane; ++px) {
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double p = field.probs.data[k * plane + px];
      if (p > 0.0) acc -= p * std::log(p);
    }
    h.data[px] = acc;
  }
  return h;
}

}  // namespace uq
