// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "uq/errors.hpp"
#include "uq/prob_field.hpp"
#include "uq/rng.hpp"
#include "uq/tensor.hpp"
#include "uq/uq_methods.hpp"

namespace uq {

/// Per-pixel entropy map with its companion prediction / ground truth.
struct UncMap {
  Tensor entropy;  // [H x W]
  LabelField pred;
  LabelField gt;
};

inline UncMap make_unc_map(const ProbField& field, const LabelField& gt) {
  return {predictive_entropy(field), argmax_labels(field), gt};
}

/// Mean entropy over TP u FP u FN pixels w.r.t. foreground (pred != 0 or
/// gt != 0); true negatives are excluded. Absent when that set is empty.
inline std::optional<double> aggregate_uncertainty(const UncMap& map) {
  if (map.pred.size() != map.entropy.size() || map.gt.size() != map.entropy.size())
    throw ValidationError("aggregate_uncertainty: size mismatch");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < map.entropy.size(); ++i) {
    if (map.pred.ids[i] != 0 || map.gt.ids[i] != 0) {
      acc += map.entropy.data[i];
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return acc / static_cast<double>(count);
}

struct HistogramData {
  std::vector<double> edges;  // num_bins + 1
  std::vector<std::size_t> counts;
};

/// Equal-width histogram of per-image aggregates over [0, max_value]
/// (max_value = ln C for entropies). Counts conserve the number of
/// present aggregates; absent entries are skipped.
inline HistogramData entropy_histogram(const std::vector<std::optional<double>>& aggregates,
                                       std::size_t num_bins, double max_value) {
  if (num_bins < 1) throw ValidationError("histogram needs >= 1 bin");
  if (max_value <= 0.0) throw ValidationError("histogram max must be > 0");
  HistogramData h;
  h.edges.resize(num_bins + 1);
  for (std::size_t b = 0; b <= num_bins; ++b)
    h.edges[b] = max_value * static_cast<double>(b) / static_cast<double>(num_bins);
  h.counts.assign(num_bins, 0);
  std::size_t present = 0;
  for (const auto& a : aggregates) {
    if (!a) continue;
    ++present;
    double clamped = std::clamp(*a, 0.0, max_value);
    std::size_t b = static_cast<std::size_t>(clamped / max_value *
                                             static_cast<double>(num_bins));
    if (b >= num_bins) b = num_bins - 1;
    ++h.counts[b];
  }
  if (present == 0)
    throw ValidationError("entropy_histogram: no aggregates present");
  return h;
}

// ---------------------------------------------------------------------------
// Ensemble diversity.
// ---------------------------------------------------------------------------

struct CorrMatrix {
  std::size_t size = 0;
  std::vector<double> values;        // row-major size x size
  bool degenerate_member = false;    // some member had zero output variance

  double at(std::size_t i, std::size_t j) const { return values[i * size + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * size + j]; }

  double mean_off_diagonal() const {
    if (size < 2) return 1.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j)
        if (i != j) acc += at(i, j);
    return acc / static_cast<double>(size * (size - 1));
  }
};

/// Pearson correlation with the degenerate convention: zero-variance
/// vectors correlate 1 only with identical vectors, else 0.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y,
                      bool* degenerate = nullptr) {
  if (x.size() != y.size() || x.empty())
    throw ValidationError("pearson: length mismatch");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    if (degenerate) *degenerate = true;
    return x == y ? 1.0 : 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

/// Correlation matrix of flattened member outputs.
inline CorrMatrix correlation_matrix(const std::vector<std::vector<double>>& outputs) {
  CorrMatrix m;
  m.size = outputs.size();
  m.values.assign(m.size * m.size, 0.0);
  for (std::size_t i = 0; i < m.size; ++i) {
    m.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < m.size; ++j) {
      bool degenerate = false;
      const double r = pearson(outputs[i], outputs[j], &degenerate);
      m.degenerate_member |= degenerate;
      m.at(i, j) = r;
      m.at(j, i) = r;
    }
  }
  return m;
}

/// Picks the member subset the diversity figure uses: the last
/// `subset_size` snapshots for cSGHMC, a seeded random subset for MCD/DE,
/// the full (single) member for MAP.
inline std::vector<std::size_t> diversity_subset(const PosteriorEnsemble& ensemble,
                                                 std::size_t subset_size,
                                                 std::uint64_t seed) {
  const std::size_t members = ensemble.method == Method::mcd
                                  ? ensemble.mcd_seeds.size()
                                  : ensemble.samples.size();
  if (subset_size > members)
    throw ValidationError("diversity subset larger than ensemble");
  std::vector<std::size_t> idx(members);
  std::iota(idx.begin(), idx.end(), 0);
  if (subset_size == members) return idx;
  if (ensemble.method == Method::csghmc)
    return {idx.end() - static_cast<std::ptrdiff_t>(subset_size), idx.end()};
  auto rng = make_rng(derive_seed(seed, RngStream::member_subset));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(subset_size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Pairwise Pearson correlations of member softmax outputs concatenated
/// over the probe images.
inline CorrMatrix diversity_matrix(const PosteriorEnsemble& ensemble,
                                   const std::vector<Tensor>& probe_images,
                                   std::size_t subset_size, std::uint64_t seed = 0) {
  ensemble.validate();
  if (probe_images.empty()) throw ValidationError("diversity needs probe images");
  const auto subset = diversity_subset(ensemble, subset_size, seed);
  std::vector<std::vector<double>> outputs(subset.size());
  parallel_for(subset.size(), [&](std::size_t si) {
    auto& flat = outputs[si];
    for (const auto& img : probe_images) {
      const Tensor p = member_softmax(ensemble, subset[si], img);
      flat.insert(flat.end(), p.data.begin(), p.data.end());
    }
  });
  return correlation_matrix(outputs);
}

}  // namespace uq
