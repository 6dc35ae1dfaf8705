// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "uq/errors.hpp"

namespace uq {

inline std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

/// Dense row-major tensor of 64-bit floats. Values are plain data; all
/// differentiation state lives on the Tape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(shape_product(shape), fill) {
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be >= 1");
    }
  }

  static Tensor scalar(double v) {
    Tensor t(std::vector<std::size_t>{1});
    t.data[0] = v;
    return t;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  bool is_scalar() const { return data.size() == 1; }

  double& operator()(std::size_t i) { return data[i]; }
  double operator()(std::size_t i) const { return data[i]; }

  double& operator()(std::size_t i, std::size_t j) {
    assert(rank() == 2);
    return data[i * shape[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(rank() == 2);
    return data[i * shape[1] + j];
  }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) {
    assert(rank() == 3);
    return data[(c * shape[1] + y) * shape[2] + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const {
    assert(rank() == 3);
    return data[(c * shape[1] + y) * shape[2] + x];
  }

  double& operator()(std::size_t o, std::size_t c, std::size_t y, std::size_t x) {
    assert(rank() == 4);
    return data[((o * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  double operator()(std::size_t o, std::size_t c, std::size_t y, std::size_t x) const {
    assert(rank() == 4);
    return data[((o * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Per-pixel class-id field (H x W), the ground-truth companion of a
/// [C x H x W] probability or logit tensor.
struct LabelField {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> ids;

  LabelField() = default;
  LabelField(std::size_t h_, std::size_t w_, std::uint8_t fill = 0)
      : h(h_), w(w_), ids(h_ * w_, fill) {}

  std::size_t size() const { return ids.size(); }
  std::uint8_t& at(std::size_t y, std::size_t x) { return ids[y * w + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return ids[y * w + x]; }
};

inline void check_labels_in_range(const LabelField& labels, std::size_t num_classes) {
  for (std::uint8_t id : labels.ids) {
    if (id >= num_classes)
      throw ValidationError("label id " + std::to_string(int(id)) +
                            " out of range for " + std::to_string(num_classes) +
                            " classes");
  }
}

}  // namespace uq
