// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "uq/errors.hpp"
#include "uq/rng.hpp"
#include "uq/tensor.hpp"

namespace uq {

// Probabilities are clamped to this floor before any log.
inline constexpr double kProbFloor = 1e-12;

/// Numerically stable per-pixel softmax over the class axis of a
/// [C x H x W] tensor (max-subtraction, renormalized sum).
inline Tensor softmax_field(const Tensor& logits) {
  if (logits.rank() != 3) throw DimensionError("softmax expects [C x H x W]");
  const std::size_t c = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  if (c < 2) throw DimensionError("softmax needs >= 2 classes");
  Tensor probs(logits.shape);
  const std::size_t plane = h * w;
  for (std::size_t px = 0; px < plane; ++px) {
    double m = logits.data[px];
    for (std::size_t k = 1; k < c; ++k) m = std::max(m, logits.data[k * plane + px]);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      double e = std::exp(logits.data[k * plane + px] - m);
      probs.data[k * plane + px] = e;
      z += e;
    }
    for (std::size_t k = 0; k < c; ++k) probs.data[k * plane + px] /= z;
  }
  return probs;
}

/// Inverted-dropout mask: zeros with probability `rate`, survivors scaled
/// by 1/(1-rate). Bit-reproducible for a fixed seed.
inline std::vector<double> dropout_mask(std::size_t n, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw ValidationError("dropout rate must be in [0, 1)");
  std::vector<double> mask(n, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uint64_t s = seed;
  for (auto& m : mask) {
    const double u = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
    m = (u < rate) ? 0.0 : keep_scale;
  }
  return mask;
}

/// Standalone dropout. `training == false` is the deterministic mode and
/// returns the input unchanged.
inline Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw ValidationError("dropout rate must be in [0, 1)");
  if (!training) return x;
  Tensor out = x;
  const auto mask = dropout_mask(x.size(), rate, seed);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
  return out;
}

/// Reverse-mode autodiff tape. Nodes are appended in forward
/// (topological) order; backward walks them in reverse, accumulating each
/// node's gradient over all consumers before its own rule runs. A tape is
/// single-threaded and rebuilt per forward pass.
class Tape {
 public:
  using NodeId = std::int32_t;

  NodeId leaf(Tensor value) { return push(std::move(value), "leaf"); }

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  std::size_t node_count() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    grads_.clear();
  }

  /// Runs reverse-mode accumulation from a scalar loss and returns the
  /// gradients of the requested nodes. The tape is cleared afterwards.
  std::vector<Tensor> backward(NodeId loss, const std::vector<NodeId>& wrt) {
    if (!value(loss).is_scalar())
      throw UsageError("backward requires a scalar loss node");
    grads_.clear();
    grads_.reserve(nodes_.size());
    for (const auto& n : nodes_) grads_.emplace_back(n.value.shape, 0.0);
    grads_[loss].data[0] = 1.0;
    for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
      if (nodes_[id].back) nodes_[id].back(*this);
    }
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (NodeId id : wrt) out.push_back(grads_[id]);
    clear();
    return out;
  }

  // ---- elementwise / reduction ----

  NodeId add(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv))
      throw DimensionError("add: shape mismatch " + shape_string(av.shape) +
                           " vs " + shape_string(bv.shape));
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    NodeId self = push(std::move(out), "add");
    nodes_[self].back = [self, a, b](Tape& t) {
      const Tensor& g = t.grads_[self];
      for (std::size_t i = 0; i < g.size(); ++i) {
        t.grads_[a].data[i] += g.data[i];
        t.grads_[b].data[i] += g.data[i];
      }
    };
    return self;
  }

  NodeId mul(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv))
      throw DimensionError("mul: shape mismatch " + shape_string(av.shape) +
                           " vs " + shape_string(bv.shape));
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
    NodeId self = push(std::move(out), "mul");
    nodes_[self].back = [self, a, b](Tape& t) {
      const Tensor& g = t.grads_[self];
      const Tensor& av = t.nodes_[a].value;
      const Tensor& bv = t.nodes_[b].value;
      for (std::size_t i = 0; i < g.size(); ++i) {
        t.grads_[a].data[i] += g.data[i] * bv.data[i];
        t.grads_[b].data[i] += g.data[i] * av.data[i];
      }
    };
    return self;
  }

  NodeId scale(NodeId a, double s) {
    Tensor out = value(a);
    for (auto& v : out.data) v *= s;
    NodeId self = push(std::move(out), "scale");
    nodes_[self].back = [self, a, s](Tape& t) {
      const Tensor& g = t.grads_[self];
      for (std::size_t i = 0; i < g.size(); ++i) t.grads_[a].data[i] += s * g.data[i];
    };
    return self;
  }

  NodeId sum(NodeId a) {
    double acc = 0.0;
    for (double v : value(a).data) acc += v;
    NodeId self = push(Tensor::scalar(acc), "sum");
    nodes_[self].back = [self, a](Tape& t) {
      const double g = t.grads_[self].data[0];
      for (auto& v : t.grads_[a].data) v += g;
    };
    return self;
  }

  NodeId relu(NodeId x) {
    Tensor out = value(x);
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    NodeId self = push(std::move(out), "relu");
    nodes_[self].back = [self, x](Tape& t) {
      const Tensor& g = t.grads_[self];
      const Tensor& xv = t.nodes_[x].value;
      Tensor& gx = t.grads_[x];
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv.data[i] > 0.0) gx.data[i] += g.data[i];
    };
    return self;
  }

  NodeId dropout(NodeId x, double rate, std::uint64_t seed) {
    auto mask = dropout_mask(value(x).size(), rate, seed);
    Tensor out = value(x);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
    NodeId self = push(std::move(out), "dropout");
    nodes_[self].back = [self, x, mask = std::move(mask)](Tape& t) {
      const Tensor& g = t.grads_[self];
      Tensor& gx = t.grads_[x];
      for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += mask[i] * g.data[i];
    };
    return self;
  }

  // ---- linear algebra ----

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
      throw DimensionError("matmul: incompatible shapes " + shape_string(av.shape) +
                           " x " + shape_string(bv.shape));
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = av(i, kk);
        for (std::size_t j = 0; j < n; ++j) out(i, j) += aik * bv(kk, j);
      }
    NodeId self = push(std::move(out), "matmul");
    nodes_[self].back = [self, a, b, m, k, n](Tape& t) {
      const Tensor& g = t.grads_[self];
      const Tensor& av = t.nodes_[a].value;
      const Tensor& bv = t.nodes_[b].value;
      Tensor& ga = t.grads_[a];
      Tensor& gb = t.grads_[b];
      // dA = g . B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g(i, j);
          for (std::size_t kk = 0; kk < k; ++kk) ga(i, kk) += gij * bv(kk, j);
        }
      // dB = A^T . g
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double aik = av(i, kk);
          for (std::size_t j = 0; j < n; ++j) gb(kk, j) += aik * g(i, j);
        }
    };
    return self;
  }

  // ---- convolution stack ----

  /// 2-D cross-correlation of a [Cin x H x W] input with a
  /// [Cout x Cin x kh x kw] kernel, zero padding.
  NodeId conv2d(NodeId input, NodeId kernel, std::size_t stride, std::size_t padding) {
    const Tensor& in = value(input);
    const Tensor& k = value(kernel);
    if (in.rank() != 3 || k.rank() != 4)
      throw DimensionError("conv2d: expects [Cin x H x W] input and [Cout x Cin x kh x kw] kernel");
    if (k.dim(1) != in.dim(0))
      throw DimensionError("conv2d: kernel Cin " + std::to_string(k.dim(1)) +
                           " != input channels " + std::to_string(in.dim(0)));
    if (k.dim(2) % 2 == 0 || k.dim(3) % 2 == 0)
      throw ValidationError("conv2d: kernel sides must be odd");
    if (stride == 0) throw ValidationError("conv2d: stride must be >= 1");
    const long h = static_cast<long>(in.dim(1)), w = static_cast<long>(in.dim(2));
    const long kh = static_cast<long>(k.dim(2)), kw = static_cast<long>(k.dim(3));
    const long p = static_cast<long>(padding), s = static_cast<long>(stride);
    const long oh_num = h + 2 * p - kh, ow_num = w + 2 * p - kw;
    if (oh_num < 0 || ow_num < 0 || oh_num % s != 0 || ow_num % s != 0)
      throw DimensionError("conv2d: non-integer output size for input " +
                           shape_string(in.shape) + " kernel " + shape_string(k.shape));
    const std::size_t cout = k.dim(0);
    const std::size_t oh = static_cast<std::size_t>(oh_num / s + 1);
    const std::size_t ow = static_cast<std::size_t>(ow_num / s + 1);

    Tensor out({cout, oh, ow});
    conv_forward(in, k, out, s, p);
    NodeId self = push(std::move(out), "conv2d");
    nodes_[self].back = [self, input, kernel, s, p](Tape& t) {
      t.conv_backward(t.nodes_[input].value, t.nodes_[kernel].value, t.grads_[self],
                      t.grads_[input], t.grads_[kernel], s, p);
    };
    return self;
  }

  /// Adds a per-channel bias vector [C] to a [C x H x W] tensor.
  NodeId bias_channels(NodeId x, NodeId bias) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(bias);
    if (xv.rank() != 3 || bv.rank() != 1 || bv.dim(0) != xv.dim(0))
      throw DimensionError("bias_channels: bias length must equal channel count");
    Tensor out = xv;
    const std::size_t plane = xv.dim(1) * xv.dim(2);
    for (std::size_t c = 0; c < xv.dim(0); ++c) {
      const double b = bv.data[c];
      for (std::size_t i = 0; i < plane; ++i) out.data[c * plane + i] += b;
    }
    NodeId self = push(std::move(out), "bias");
    nodes_[self].back = [self, x, bias, plane](Tape& t) {
      const Tensor& g = t.grads_[self];
      Tensor& gx = t.grads_[x];
      Tensor& gb = t.grads_[bias];
      for (std::size_t c = 0; c < gb.size(); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          const double gi = g.data[c * plane + i];
          gx.data[c * plane + i] += gi;
          acc += gi;
        }
        gb.data[c] += acc;
      }
    };
    return self;
  }

  /// 2x2 max pooling with stride 2; requires even spatial dims.
  NodeId max_pool2(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) throw DimensionError("max_pool2 expects [C x H x W]");
    const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
      throw DimensionError("max_pool2: spatial dims must be even, got " +
                           shape_string(xv.shape));
    Tensor out({c, h / 2, w / 2});
    std::vector<std::uint32_t> argmax(out.size());
    std::size_t oi = 0;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < h / 2; ++oy)
        for (std::size_t ox = 0; ox < w / 2; ++ox, ++oi) {
          const std::size_t base = (ch * h + 2 * oy) * w + 2 * ox;
          std::size_t best = base;
          double bv = xv.data[base];
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + dy * w + dx;
              if (xv.data[idx] > bv) {
                bv = xv.data[idx];
                best = idx;
              }
            }
          out.data[oi] = bv;
          argmax[oi] = static_cast<std::uint32_t>(best);
        }
    NodeId self = push(std::move(out), "max_pool2");
    nodes_[self].back = [self, x, argmax = std::move(argmax)](Tape& t) {
      const Tensor& g = t.grads_[self];
      Tensor& gx = t.grads_[x];
      for (std::size_t i = 0; i < g.size(); ++i) gx.data[argmax[i]] += g.data[i];
    };
    return self;
  }

  /// Nearest-neighbour 2x upsampling.
  NodeId upsample2(NodeId x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) throw DimensionError("upsample2 expects [C x H x W]");
    const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor out({c, 2 * h, 2 * w});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t x2 = 0; x2 < 2 * w; ++x2)
          out(ch, y, x2) = xv(ch, y / 2, x2 / 2);
    NodeId self = push(std::move(out), "upsample2");
    nodes_[self].back = [self, x, c, h, w](Tape& t) {
      const Tensor& g = t.grads_[self];
      Tensor& gx = t.grads_[x];
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < 2 * h; ++y)
          for (std::size_t x2 = 0; x2 < 2 * w; ++x2)
            gx(ch, y / 2, x2 / 2) += g(ch, y, x2);
    };
    return self;
  }

  NodeId concat_channels(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
      throw DimensionError("concat_channels: spatial dims must match");
    Tensor out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.size());
    const std::size_t na = av.size();  // before push: node storage may move
    NodeId self = push(std::move(out), "concat");
    nodes_[self].back = [self, a, b, na](Tape& t) {
      const Tensor& g = t.grads_[self];
      Tensor& ga = t.grads_[a];
      Tensor& gb = t.grads_[b];
      for (std::size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
      for (std::size_t i = na; i < g.size(); ++i) gb.data[i - na] += g.data[i];
    };
    return self;
  }

  // ---- classification head ----

  NodeId softmax_classes(NodeId logits) {
    Tensor probs = softmax_field(value(logits));
    NodeId self = push(std::move(probs), "softmax");
    nodes_[self].back = [self, logits](Tape& t) {
      const Tensor& p = t.nodes_[self].value;
      const Tensor& g = t.grads_[self];
      Tensor& gl = t.grads_[logits];
      const std::size_t c = p.dim(0), plane = p.dim(1) * p.dim(2);
      for (std::size_t px = 0; px < plane; ++px) {
        double dot = 0.0;
        for (std::size_t k = 0; k < c; ++k)
          dot += g.data[k * plane + px] * p.data[k * plane + px];
        for (std::size_t k = 0; k < c; ++k) {
          const std::size_t i = k * plane + px;
          gl.data[i] += p.data[i] * (g.data[i] - dot);
        }
      }
    };
    return self;
  }

  /// Mean over pixels of -log p[label]; probabilities floored at
  /// kProbFloor before the log.
  NodeId cross_entropy(NodeId probs, const LabelField& labels) {
    const Tensor& p = value(probs);
    if (p.rank() != 3) throw DimensionError("cross_entropy expects [C x H x W] probs");
    if (p.dim(1) != labels.h || p.dim(2) != labels.w)
      throw DimensionError("cross_entropy: label field size mismatch");
    check_labels_in_range(labels, p.dim(0));
    const std::size_t plane = labels.h * labels.w;
    double acc = 0.0;
    for (std::size_t px = 0; px < plane; ++px) {
      const double pv = p.data[labels.ids[px] * plane + px];
      acc -= std::log(std::max(pv, kProbFloor));
    }
    NodeId self = push(Tensor::scalar(acc / static_cast<double>(plane)), "cross_entropy");
    nodes_[self].back = [self, probs, ids = labels.ids, plane](Tape& t) {
      const double g = t.grads_[self].data[0];
      const Tensor& p = t.nodes_[probs].value;
      Tensor& gp = t.grads_[probs];
      const double inv_n = 1.0 / static_cast<double>(plane);
      for (std::size_t px = 0; px < plane; ++px) {
        const std::size_t i = ids[px] * plane + px;
        if (p.data[i] > kProbFloor) gp.data[i] -= g * inv_n / p.data[i];
      }
    };
    return self;
  }

 private:
  struct Node {
    Tensor value;
    std::function<void(Tape&)> back;  // null for leaves
    const char* op;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;

  NodeId push(Tensor value, const char* op) {
    nodes_.push_back(Node{std::move(value), nullptr, op});
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  static void conv_forward(const Tensor& in, const Tensor& k, Tensor& out,
                           long s, long p) {
    const long cin = static_cast<long>(in.dim(0));
    const long h = static_cast<long>(in.dim(1)), w = static_cast<long>(in.dim(2));
    const long cout = static_cast<long>(out.dim(0));
    const long oh = static_cast<long>(out.dim(1)), ow = static_cast<long>(out.dim(2));
    const long kh = static_cast<long>(k.dim(2)), kw = static_cast<long>(k.dim(3));
    for (long co = 0; co < cout; ++co)
      for (long ci = 0; ci < cin; ++ci)
        for (long ky = 0; ky < kh; ++ky)
          for (long kx = 0; kx < kw; ++kx) {
            const double wv = k.data[((co * cin + ci) * kh + ky) * kw + kx];
            if (wv == 0.0) continue;
            const auto [oy0, oy1] = valid_range(ky, p, s, h, oh);
            const auto [ox0, ox1] = valid_range(kx, p, s, w, ow);
            for (long oy = oy0; oy <= oy1; ++oy) {
              const long iy = oy * s + ky - p;
              const double* in_row = &in.data[(ci * h + iy) * w];
              double* out_row = &out.data[(co * oh + oy) * ow];
              for (long ox = ox0; ox <= ox1; ++ox)
                out_row[ox] += wv * in_row[ox * s + kx - p];
            }
          }
  }

  static void conv_backward(const Tensor& in, const Tensor& k, const Tensor& gout,
                            Tensor& gin, Tensor& gk, long s, long p) {
    const long cin = static_cast<long>(in.dim(0));
    const long h = static_cast<long>(in.dim(1)), w = static_cast<long>(in.dim(2));
    const long cout = static_cast<long>(gout.dim(0));
    const long oh = static_cast<long>(gout.dim(1)), ow = static_cast<long>(gout.dim(2));
    const long kh = static_cast<long>(k.dim(2)), kw = static_cast<long>(k.dim(3));
    for (long co = 0; co < cout; ++co)
      for (long ci = 0; ci < cin; ++ci)
        for (long ky = 0; ky < kh; ++ky)
          for (long kx = 0; kx < kw; ++kx) {
            const std::size_t kidx = ((co * cin + ci) * kh + ky) * kw + kx;
            const double wv = k.data[kidx];
            double wacc = 0.0;
            const auto [oy0, oy1] = valid_range(ky, p, s, h, oh);
            const auto [ox0, ox1] = valid_range(kx, p, s, w, ow);
            for (long oy = oy0; oy <= oy1; ++oy) {
              const long iy = oy * s + ky - p;
              const double* in_row = &in.data[(ci * h + iy) * w];
              double* gin_row = &gin.data[(ci * h + iy) * w];
              const double* gout_row = &gout.data[(co * oh + oy) * ow];
              for (long ox = ox0; ox <= ox1; ++ox) {
                const double go = gout_row[ox];
                gin_row[ox * s + kx - p] += wv * go;
                wacc += in_row[ox * s + kx - p] * go;
              }
            }
            gk.data[kidx] += wacc;
          }
  }

  // Output-coordinate range [lo, hi] for which the input index
  // o*s + k - p stays inside [0, size).
  static std::pair<long, long> valid_range(long k, long p, long s, long in_size,
                                           long out_size) {
    const long num_lo = p - k;               // o*s >= num_lo
    const long num_hi = in_size - 1 + p - k; // o*s <= num_hi
    long lo = num_lo <= 0 ? 0 : (num_lo + s - 1) / s;
    long hi = num_hi < 0 ? -1 : num_hi / s;
    lo = std::max(lo, 0L);
    hi = std::min(hi, out_size - 1);
    return {lo, hi};
  }
};

}  // namespace uq
