// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "uq/errors.hpp"
#include "uq/prob_field.hpp"
#include "uq/tape.hpp"
#include "uq/tensor.hpp"

namespace uq {

// ---------------------------------------------------------------------------
// Segmentation performance.
// ---------------------------------------------------------------------------

struct DiceResult {
  std::vector<double> per_class;
  double mean_foreground = 0.0;  // mean over classes 1..C-1
};

/// Per class: 2|P n G| / (|P| + |G|); a class absent from both prediction
/// and ground truth scores 1. The reported mean excludes class 0.
inline DiceResult dice(const LabelField& pred, const LabelField& gt,
                       std::size_t num_classes) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw ValidationError("dice: label field shapes differ");
  check_labels_in_range(pred, num_classes);
  check_labels_in_range(gt, num_classes);
  std::vector<std::size_t> p_count(num_classes, 0), g_count(num_classes, 0),
      overlap(num_classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++p_count[pred.ids[i]];
    ++g_count[gt.ids[i]];
    if (pred.ids[i] == gt.ids[i]) ++overlap[pred.ids[i]];
  }
  DiceResult r;
  r.per_class.resize(num_classes);
  double acc = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t denom = p_count[c] + g_count[c];
    r.per_class[c] = denom == 0
                         ? 1.0
                         : 2.0 * static_cast<double>(overlap[c]) / static_cast<double>(denom);
    if (c > 0) acc += r.per_class[c];
  }
  r.mean_foreground = acc / static_cast<double>(num_classes - 1);
  return r;
}

// ---------------------------------------------------------------------------
// Calibration metrics.
// ---------------------------------------------------------------------------

/// Mean over pixels of -ln p[gt], probabilities floored at kProbFloor.
inline double nll(const ProbField& field, const LabelField& gt) {
  if (field.height() != gt.h || field.width() != gt.w)
    throw ValidationError("nll: shape mismatch");
  check_labels_in_range(gt, field.classes());
  const std::size_t plane = gt.size();
  double acc = 0.0;
  for (std::size_t px = 0; px < plane; ++px) {
    const double p = field.probs.data[gt.ids[px] * plane + px];
    acc -= std::log(std::max(p, kProbFloor));
  }
  return acc / static_cast<double>(plane);
}

/// Mean over pixels of the squared distance between the probability
/// vector and the one-hot label (sum over classes, range [0, 2]).
inline double brier(const ProbField& field, const LabelField& gt) {
  if (field.height() != gt.h || field.width() != gt.w)
    throw ValidationError("brier: shape mismatch");
  check_labels_in_range(gt, field.classes());
  const std::size_t c = field.classes(), plane = gt.size();
  double acc = 0.0;
  for (std::size_t px = 0; px < plane; ++px) {
    for (std::size_t k = 0; k < c; ++k) {
      const double target = (k == gt.ids[px]) ? 1.0 : 0.0;
      const double d = field.probs.data[k * plane + px] - target;
      acc += d * d;
    }
  }
  return acc / static_cast<double>(plane);
}

struct ReliabilityBins {
  std::vector<double> edges;            // num_bins + 1, equal width over [0, 1]
  std::vector<std::size_t> counts;
  std::vector<double> mean_confidence;  // 0 where a bin is empty
  std::vector<double> accuracy;         // 0 where a bin is empty

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
};

struct EceResult {
  double ece = 0.0;
  ReliabilityBins bins;
};

/// Expected calibration error over max-probability confidences, binned
/// into equal-width bins; empty bins contribute nothing.
inline EceResult ece(const ProbField& field, const LabelField& gt,
                     std::size_t num_bins = 15) {
  if (num_bins < 1) throw ValidationError("ece: num_bins must be >= 1");
  if (field.height() != gt.h || field.width() != gt.w)
    throw ValidationError("ece: shape mismatch");
  check_labels_in_range(gt, field.classes());

  EceResult r;
  r.bins.edges.resize(num_bins + 1);
  for (std::size_t b = 0; b <= num_bins; ++b)
    r.bins.edges[b] = static_cast<double>(b) / static_cast<double>(num_bins);
  r.bins.counts.assign(num_bins, 0);
  std::vector<double> conf_sum(num_bins, 0.0), correct_sum(num_bins, 0.0);

  const LabelField pred = argmax_labels(field);
  const std::size_t c = field.classes(), plane = gt.size();
  for (std::size_t px = 0; px < plane; ++px) {
    double conf = field.probs.data[pred.ids[px] * plane + px];
    (void)c;
    std::size_t b = static_cast<std::size_t>(conf * static_cast<double>(num_bins));
    if (b >= num_bins) b = num_bins - 1;  // confidence 1.0 lands in the top bin
    ++r.bins.counts[b];
    conf_sum[b] += conf;
    if (pred.ids[px] == gt.ids[px]) correct_sum[b] += 1.0;
  }

  r.bins.mean_confidence.assign(num_bins, 0.0);
  r.bins.accuracy.assign(num_bins, 0.0);
  const double total = static_cast<double>(plane);
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (r.bins.counts[b] == 0) continue;
    const double n = static_cast<double>(r.bins.counts[b]);
    r.bins.mean_confidence[b] = conf_sum[b] / n;
    r.bins.accuracy[b] = correct_sum[b] / n;
    r.ece += (n / total) * std::abs(r.bins.accuracy[b] - r.bins.mean_confidence[b]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Report rows.
// ---------------------------------------------------------------------------

struct MetricRow {
  std::string method;
  std::string shift_kind;
  double shift_level = 0.0;
  double dice_mean = 0.0;
  double dice_c1 = 0.0;
  double dice_c2 = 0.0;
  double nll = 0.0;
  double brier = 0.0;
  double ece = 0.0;
};

inline std::string metric_csv_header() {
  return "method,shift_kind,shift_level,dice_mean,dice_c1,dice_c2,nll,brier,ece";
}

inline std::string to_csv(const MetricRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                row.method.c_str(), row.shift_kind.c_str(), row.shift_level,
                row.dice_mean, row.dice_c1, row.dice_c2, row.nll, row.brier, row.ece);
  return buf;
}

}  // namespace uq
