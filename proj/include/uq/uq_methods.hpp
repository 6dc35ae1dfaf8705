// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "uq/data.hpp"
#include "uq/errors.hpp"
#include "uq/model.hpp"
#include "uq/parallel.hpp"
#include "uq/prob_field.hpp"
#include "uq/samplers.hpp"

namespace uq {

enum class Method { csghmc, mcd, de, map };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::csghmc: return "csghmc";
    case Method::mcd: return "mcd";
    case Method::de: return "de";
    case Method::map: return "map";
  }
  return "map";
}

inline Method parse_method(const std::string& name) {
  if (name == "csghmc") return Method::csghmc;
  if (name == "mcd") return Method::mcd;
  if (name == "de") return Method::de;
  if (name == "map") return Method::map;
  throw ValidationError("unknown method: " + name);
}

/// Monte Carlo approximation of the parameter posterior: S parameter
/// snapshots (cSGHMC, DE), one snapshot plus S dropout seeds (MCD), or a
/// single point estimate (MAP).
struct PosteriorEnsemble {
  Method method = Method::map;
  std::size_t sample_count = 1;  // S
  ModelConfig model_config;
  std::vector<ParamVector> samples;
  std::vector<std::uint64_t> mcd_seeds;
  double mcd_eval_rate = 0.0;

  void validate() const {
    if (samples.empty()) throw UsageError("ensemble has no parameter samples");
    for (const auto& s : samples)
      if (s.size() != samples.front().size())
        throw ValidationError("ensemble members have differing parameter counts");
    if (method == Method::map && sample_count != 1)
      throw ValidationError("MAP ensembles have S = 1");
    if (method == Method::mcd && mcd_seeds.size() != sample_count)
      throw ValidationError("MCD ensemble must carry S seeds");
    if ((method == Method::csghmc || method == Method::de) &&
        samples.size() != sample_count)
      throw ValidationError("ensemble must carry S parameter snapshots");
  }
};

// ---------------------------------------------------------------------------
// Shared minibatch machinery.
// ---------------------------------------------------------------------------

namespace detail {

/// Mean cross-entropy loss over a batch; fills grad with the mean CE
/// gradient plus l2_coeff * theta. The recorded loss excludes the
/// penalty term (it is the training-curve quantity).
inline double batch_loss_grad(SegNet& net, std::span<const double> theta,
                              const Dataset& data, std::span<const std::size_t> batch,
                              double l2_coeff, std::uint64_t dropout_seed,
                              std::vector<double>& grad) {
  unflatten(net, ParamVector(theta.begin(), theta.end()));
  const std::size_t d = theta.size();
  grad.assign(d, 0.0);
  double loss_acc = 0.0;
  for (std::size_t bi = 0; bi < batch.size(); ++bi) {
    const std::size_t idx = batch[bi];
    Tape tape;
    auto fwd = forward_on_tape(tape, net, data.images[idx], ForwardMode::train,
                               derive_seed(dropout_seed, RngStream::dropout, idx),
                               net.config.dropout_rate);
    auto loss = tape.cross_entropy(tape.softmax_classes(fwd.logits), data.labels[idx]);
    loss_acc += tape.value(loss).data[0];
    auto grads = tape.backward(loss, fwd.param_ids);
    std::size_t offset = 0;
    for (const auto& g : grads) {
      for (std::size_t i = 0; i < g.size(); ++i) grad[offset + i] += g.data[i];
      offset += g.size();
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < d; ++i) grad[i] = grad[i] * inv_b + l2_coeff * theta[i];
  return loss_acc * inv_b;
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                            std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(derive_seed(seed, RngStream::batch_shuffle, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace detail

struct SgdTrainResult {
  ParamVector theta;
  std::vector<double> epoch_losses;
};

/// SGD-with-momentum training of one network (the MAP / MCD / DE member
/// protocol). The seed drives init, shuffling and dropout together.
inline SgdTrainResult train_sgd_network(const Dataset& data, ModelConfig model_config,
                                        const TrainConfig& train) {
  train.validate();
  if (data.images.empty()) throw ValidationError("empty training set");
  model_config.seed = train.seed;
  SegNet net = init(model_config);
  SegNet worker = net;

  const std::size_t n = data.images.size();
  const std::size_t steps = (n + train.batch_size - 1) / train.batch_size;
  std::vector<std::size_t> order;

  auto grad_fn = [&](std::span<const double> theta, std::size_t epoch, std::size_t step,
                     std::vector<double>& grad) {
    if (step == 0) order = detail::epoch_order(n, train.seed, epoch);
    const std::size_t lo = step * train.batch_size;
    const std::size_t hi = std::min(n, lo + train.batch_size);
    return detail::batch_loss_grad(
        worker, theta, data, std::span<const std::size_t>(order).subspan(lo, hi - lo),
        train.weight_decay, derive_seed(train.seed, RngStream::dropout, epoch * steps + step),
        grad);
  };

  SgdTrainResult result;
  result.theta = run_sgd_chain(flatten(net), train.epochs, steps, train.learning_rate,
                               train.momentum, grad_fn, &result.epoch_losses);
  return result;
}

// ---------------------------------------------------------------------------
// The four methods.
// ---------------------------------------------------------------------------

struct CsghmcTrainResult {
  PosteriorEnsemble ensemble;
  std::vector<double> epoch_losses;
  std::vector<std::size_t> snapshot_epochs;
};

/// Cyclical SGHMC over the full network; snapshots collected by
/// samplers::collect_policy, one per post-burn-in cycle.
inline CsghmcTrainResult train_csghmc(const Dataset& data, ModelConfig model_config,
                                      const CyclicalSchedule& schedule,
                                      std::size_t sample_count, double beta,
                                      double weight_decay, std::size_t batch_size,
                                      std::uint64_t seed) {
  schedule.validate();
  if (data.images.empty()) throw ValidationError("empty training set");
  model_config.seed = seed;
  model_config.weight_decay = weight_decay;
  SegNet worker = init(model_config);

  const std::size_t n = data.images.size();
  const double n_d = static_cast<double>(n);
  const std::size_t steps = (n + batch_size - 1) / batch_size;
  if (schedule.steps_per_epoch != steps)
    throw ConfigError("schedule.steps_per_epoch (" +
                      std::to_string(schedule.steps_per_epoch) +
                      ") must match ceil(n / batch_size) = " + std::to_string(steps));
  std::vector<std::size_t> order;

  // The prior contributes (lambda / n) * theta to the stochastic gradient;
  // the stepper's n multiplier restores the full-dataset scale.
  auto grad_fn = [&](std::span<const double> theta, std::size_t epoch, std::size_t step,
                     std::vector<double>& grad) {
    if (step == 0) order = detail::epoch_order(n, seed, epoch);
    const std::size_t lo = step * batch_size;
    const std::size_t hi = std::min(n, lo + batch_size);
    return detail::batch_loss_grad(
        worker, theta, data, std::span<const std::size_t>(order).subspan(lo, hi - lo),
        weight_decay / n_d, derive_seed(seed, RngStream::dropout, epoch * steps + step),
        grad);
  };

  const auto run = run_csghmc_chain(flatten(init(model_config)), beta, schedule,
                                    sample_count, n_d, seed, grad_fn);

  CsghmcTrainResult result;
  result.epoch_losses = run.epoch_losses;
  result.snapshot_epochs = run.snapshot_epochs;
  result.ensemble.method = Method::csghmc;
  result.ensemble.sample_count = sample_count;
  result.ensemble.model_config = model_config;
  result.ensemble.samples = run.snapshots;
  result.ensemble.validate();
  return result;
}

struct MapTrainResult {
  PosteriorEnsemble ensemble;
  std::vector<double> epoch_losses;
};

/// Point estimate: S = 1; uncertainty is later the softmax entropy of the
/// single deterministic forward.
inline MapTrainResult train_map(const Dataset& data, const ModelConfig& model_config,
                                const TrainConfig& train) {
  auto sgd = train_sgd_network(data, model_config, train);
  MapTrainResult result;
  result.epoch_losses = std::move(sgd.epoch_losses);
  result.ensemble.method = Method::map;
  result.ensemble.sample_count = 1;
  result.ensemble.model_config = model_config;
  result.ensemble.model_config.seed = train.seed;
  result.ensemble.samples.push_back(std::move(sgd.theta));
  result.ensemble.validate();
  return result;
}

/// Wraps trained MAP parameters with S dropout-seeded stochastic forward
/// configurations. A zero eval rate degenerates to MAP and only warns.
inline PosteriorEnsemble sample_mcd(ParamVector map_params, const ModelConfig& model_config,
                                    std::size_t sample_count, double dropout_rate,
                                    std::uint64_t seed) {
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ValidationError("MCD eval dropout rate must be in [0, 1)");
  if (dropout_rate == 0.0)
    std::cerr << "[uqshift] warning: MCD with dropout rate 0 is a degenerate "
                 "ensemble; member predictions are identical\n";
  PosteriorEnsemble e;
  e.method = Method::mcd;
  e.sample_count = sample_count;
  e.model_config = model_config;
  e.samples.push_back(std::move(map_params));
  e.mcd_eval_rate = dropout_rate;
  for (std::size_t s = 0; s < sample_count; ++s)
    e.mcd_seeds.push_back(derive_seed(seed, RngStream::mcd_seeds, s));
  e.validate();
  return e;
}

struct DeTrainResult {
  PosteriorEnsemble ensemble;
  std::vector<std::vector<double>> member_epoch_losses;
};

/// S networks trained from scratch under an identical protocol, differing
/// only in seed (init + shuffling + dropout). Members train in parallel.
inline DeTrainResult train_deep_ensemble(const Dataset& data, const ModelConfig& model_config,
                                         TrainConfig train,
                                         const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() < 2) throw ValidationError("deep ensemble needs S >= 2 members");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ValidationError("deep ensemble seeds must be pairwise distinct");

  DeTrainResult result;
  result.ensemble.method = Method::de;
  result.ensemble.sample_count = seeds.size();
  result.ensemble.model_config = model_config;
  result.ensemble.samples.resize(seeds.size());
  result.member_epoch_losses.resize(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    TrainConfig member = train;
    member.seed = seeds[i];
    auto sgd = train_sgd_network(data, model_config, member);
    result.ensemble.samples[i] = std::move(sgd.theta);
    result.member_epoch_losses[i] = std::move(sgd.epoch_losses);
  });
  result.ensemble.validate();
  return result;
}

// ---------------------------------------------------------------------------
// Marginal prediction.
// ---------------------------------------------------------------------------

/// Softmax output of one ensemble member on one image.
inline Tensor member_softmax(const PosteriorEnsemble& ensemble, std::size_t member,
                             const Tensor& image) {
  ensemble.validate();
  SegNet net = init(ensemble.model_config);
  if (ensemble.method == Method::mcd) {
    unflatten(net, ensemble.samples[0]);
    return softmax_field(forward(net, image, ForwardMode::eval_stochastic,
                                 ensemble.mcd_seeds[member], ensemble.mcd_eval_rate));
  }
  unflatten(net, ensemble.samples[member]);
  return softmax_field(forward(net, image, ForwardMode::eval_deterministic));
}

/// p(y|x, D) ~= (1/S) sum_s p(y|x, theta_s): the per-pixel mean of member
/// softmax outputs (the single softmax for MAP).
inline ProbField predictive_distribution(const PosteriorEnsemble& ensemble,
                                         const Tensor& image) {
  ensemble.validate();
  const std::size_t members =
      ensemble.method == Method::mcd ? ensemble.mcd_seeds.size() : ensemble.samples.size();
  Tensor acc;
  for (std::size_t s = 0; s < members; ++s) {
    const Tensor p = member_softmax(ensemble, s, image);
    if (s == 0) {
      acc = p;
    } else {
      for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += p.data[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(members);
  for (auto& v : acc.data) v *= inv;
  return ProbField(std::move(acc));
}

}  // namespace uq
