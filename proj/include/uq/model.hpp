// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uq/data.hpp"
#include "uq/errors.hpp"
#include "uq/rng.hpp"
#include "uq/tape.hpp"
#include "uq/tensor.hpp"

namespace uq {

using ParamVector = std::vector<double>;

struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 3;
  std::size_t base_channels = 8;
  std::size_t depth = 2;
  double dropout_rate = 0.0;   // train-time rate
  double weight_decay = 1e-4;  // L2 coefficient
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ValidationError("dropout_rate must be in [0, 1)");
    if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
    if (depth < 1) throw ValidationError("depth must be >= 1");
    if (base_channels < 1 || in_channels < 1)
      throw ValidationError("channel counts must be >= 1");
  }
};

enum class ForwardMode { train, eval_stochastic, eval_deterministic };

/// One convolution layer of the mini U-Net.
struct ConvSpec {
  std::string name;
  std::size_t cin, cout, ksize;
};

/// Encoder/decoder layout implied by a ModelConfig. The order here fixes
/// the ParamVector layout: kernel then bias, per conv, in this sequence.
inline std::vector<ConvSpec> conv_layout(const ModelConfig& cfg) {
  std::vector<ConvSpec> specs;
  std::size_t ch = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t out = cfg.base_channels << i;
    specs.push_back({"enc" + std::to_string(i), ch, out, 3});
    ch = out;
  }
  specs.push_back({"bottleneck", ch, ch * 2, 3});
  for (std::size_t i = cfg.depth; i-- > 0;) {
    const std::size_t skip = cfg.base_channels << i;
    specs.push_back({"dec" + std::to_string(i), skip * 2 + skip, skip, 3});
  }
  specs.push_back({"out", cfg.base_channels, cfg.num_classes, 1});
  return specs;
}

/// Miniature U-Net: 3x3 convs, 2x max-pool / nearest upsample, skip
/// concatenation, dropout after every convolution.
struct SegNet {
  ModelConfig config;
  std::vector<Tensor> params;  // kernel, bias, kernel, bias, ...

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }
};

/// He fan-in initialisation from config.seed; biases start at zero.
inline SegNet init(const ModelConfig& cfg) {
  cfg.validate();
  SegNet net;
  net.config = cfg;
  auto rng = make_rng(derive_seed(cfg.seed, RngStream::model_init));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& spec : conv_layout(cfg)) {
    Tensor kernel({spec.cout, spec.cin, spec.ksize, spec.ksize});
    const double stddev =
        std::sqrt(2.0 / static_cast<double>(spec.cin * spec.ksize * spec.ksize));
    for (auto& v : kernel.data) v = stddev * normal(rng);
    net.params.push_back(std::move(kernel));
    Tensor bias({spec.cout});
    for (auto& v : bias.data) v = 0.01 * normal(rng);
    net.params.push_back(std::move(bias));
  }
  return net;
}

inline ParamVector flatten(const SegNet& net) {
  ParamVector v;
  v.reserve(net.param_count());
  for (const auto& p : net.params) v.insert(v.end(), p.data.begin(), p.data.end());
  return v;
}

inline void unflatten(SegNet& net, const ParamVector& v) {
  if (v.size() != net.param_count())
    throw DimensionError("param vector length " + std::to_string(v.size()) +
                         " != model size " + std::to_string(net.param_count()));
  std::size_t offset = 0;
  for (auto& p : net.params) {
    std::copy(v.begin() + offset, v.begin() + offset + p.size(), p.data.begin());
    offset += p.size();
  }
}

/// (lambda/2) * ||theta||^2; its gradient contribution is lambda * theta.
inline double l2_penalty(const SegNet& net) {
  double sq = 0.0;
  for (const auto& p : net.params)
    for (double v : p.data) sq += v * v;
  return 0.5 * net.config.weight_decay * sq;
}

struct TapedForward {
  std::vector<Tape::NodeId> param_ids;  // one per entry of net.params
  Tape::NodeId logits;
};

/// Builds the network graph on `tape`. Dropout nodes are inserted after
/// every convolution in train / eval_stochastic mode (rate > 0); the
/// deterministic mode applies none.
inline TapedForward forward_on_tape(Tape& tape, const SegNet& net, const Tensor& image,
                                    ForwardMode mode, std::uint64_t seed,
                                    double dropout_rate) {
  const ModelConfig& cfg = net.config;
  if (image.rank() != 3 || image.dim(0) != cfg.in_channels)
    throw DimensionError("forward expects [" + std::to_string(cfg.in_channels) +
                         " x H x W] input, got " + shape_string(image.shape));
  const std::size_t div = std::size_t{1} << cfg.depth;
  if (image.dim(1) % div != 0 || image.dim(2) % div != 0)
    throw DimensionError("spatial dims must be divisible by 2^depth");

  const bool stochastic =
      (mode != ForwardMode::eval_deterministic) && dropout_rate > 0.0;

  TapedForward fwd;
  const auto layout = conv_layout(cfg);
  for (const auto& p : net.params) fwd.param_ids.push_back(tape.leaf(p));

  std::size_t layer = 0;
  std::uint64_t drop_layer = 0;
  auto conv_block = [&](Tape::NodeId x, bool final_layer) {
    const std::size_t pad = (layout[layer].ksize - 1) / 2;
    auto y = tape.conv2d(x, fwd.param_ids[2 * layer], 1, pad);
    y = tape.bias_channels(y, fwd.param_ids[2 * layer + 1]);
    if (!final_layer) y = tape.relu(y);
    if (stochastic)
      y = tape.dropout(y, dropout_rate,
                       derive_seed(seed, RngStream::dropout, drop_layer));
    ++layer;
    ++drop_layer;
    return y;
  };

  std::vector<Tape::NodeId> skips;
  Tape::NodeId x = tape.leaf(image);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    x = conv_block(x, false);
    skips.push_back(x);
    x = tape.max_pool2(x);
  }
  x = conv_block(x, false);  // bottleneck
  for (std::size_t i = cfg.depth; i-- > 0;) {
    x = tape.upsample2(x);
    x = tape.concat_channels(x, skips[i]);
    x = conv_block(x, false);
  }
  fwd.logits = conv_block(x, true);
  return fwd;
}

/// Plain forward pass; returns logits [C x H x W].
inline Tensor forward(const SegNet& net, const Tensor& image, ForwardMode mode,
                      std::uint64_t seed = 0, double dropout_rate_override = -1.0) {
  Tape tape;
  const double rate =
      dropout_rate_override >= 0.0 ? dropout_rate_override : net.config.dropout_rate;
  auto fwd = forward_on_tape(tape, net, image, mode, seed, rate);
  return tape.value(fwd.logits);
}

// ---------------------------------------------------------------------------
// Checkpoints: flattened ParamVector in the binary tensor format, plus a
// JSON sidecar with the ModelConfig and parameter layout.
// ---------------------------------------------------------------------------

inline void save_checkpoint(const SegNet& net, const std::string& path) {
  const ParamVector theta = flatten(net);
  Tensor flat({theta.size()});
  flat.data = theta;
  save_tensor(flat, path);

  nlohmann::json j;
  j["model"] = {{"in_channels", net.config.in_channels},
                {"num_classes", net.config.num_classes},
                {"base_channels", net.config.base_channels},
                {"depth", net.config.depth},
                {"dropout_rate", net.config.dropout_rate},
                {"weight_decay", net.config.weight_decay},
                {"seed", net.config.seed}};
  auto layout = nlohmann::json::array();
  for (const auto& p : net.params) layout.push_back(p.shape);
  j["layout"] = layout;
  j["param_count"] = net.param_count();
  std::ofstream out(path + ".json", std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint sidecar " + path + ".json");
  out << j.dump(2) << "\n";
}

inline SegNet load_checkpoint(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw IoError("cannot open checkpoint sidecar " + path + ".json");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint sidecar parse failure: " + std::string(e.what()));
  }
  ModelConfig cfg;
  const auto& m = j.at("model");
  cfg.in_channels = m.at("in_channels").get<std::size_t>();
  cfg.num_classes = m.at("num_classes").get<std::size_t>();
  cfg.base_channels = m.at("base_channels").get<std::size_t>();
  cfg.depth = m.at("depth").get<std::size_t>();
  cfg.dropout_rate = m.at("dropout_rate").get<double>();
  cfg.weight_decay = m.at("weight_decay").get<double>();
  cfg.seed = m.at("seed").get<std::uint64_t>();

  SegNet net = init(cfg);
  const Tensor flat = load_tensor(path);
  if (flat.size() != net.param_count())
    throw IoError("checkpoint " + path + " holds " + std::to_string(flat.size()) +
                  " parameters, model expects " + std::to_string(net.param_count()));
  unflatten(net, flat.data);
  return net;
}

}  // namespace uq
