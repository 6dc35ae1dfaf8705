// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uq/errors.hpp"
#include "uq/rng.hpp"

namespace uq {

// ---------------------------------------------------------------------------
// Schedules.
// ---------------------------------------------------------------------------

/// Cosine cyclical step-size schedule with warm restarts. One cycle spans
/// cycle_epochs * steps_per_epoch optimizer steps.
struct CyclicalSchedule {
  double lr0 = 0.1;
  std::size_t cycle_epochs = 50;
  std::size_t steps_per_epoch = 1;
  std::size_t total_epochs = 1200;
  std::size_t burn_in_epochs = 200;
  std::size_t noise_start_epoch = 10;

  void validate() const {
    if (lr0 <= 0.0) throw ValidationError("lr0 must be > 0");
    if (cycle_epochs < 1) throw ValidationError("cycle_epochs must be >= 1");
    if (steps_per_epoch < 1) throw ValidationError("steps_per_epoch must be >= 1");
    if (burn_in_epochs >= total_epochs)
      throw ValidationError("burn_in_epochs must be < total_epochs");
    if (noise_start_epoch > total_epochs)
      throw ValidationError("noise_start_epoch must be <= total_epochs");
  }

  std::size_t steps_per_cycle() const { return cycle_epochs * steps_per_epoch; }
  std::size_t complete_cycles() const { return total_epochs / cycle_epochs; }

  /// Cycles whose first epoch falls at or after the burn-in boundary.
  std::size_t post_burn_in_cycles() const {
    std::size_t count = 0;
    for (std::size_t c = 0; c < complete_cycles(); ++c)
      if (c * cycle_epochs >= burn_in_epochs) ++count;
    return count;
  }
};

/// lr_k = (lr0 / 2) * (cos(pi * mod(k, Kc) / Kc) + 1); restarts at lr0,
/// decays towards 0 within each cycle.
inline double cyclic_lr(const CyclicalSchedule& sched, std::int64_t k) {
  const auto kc = static_cast<std::int64_t>(sched.steps_per_cycle());
  const double pos = static_cast<double>(k % kc) / static_cast<double>(kc);
  return 0.5 * sched.lr0 * (std::cos(3.14159265358979323846 * pos) + 1.0);
}

// ---------------------------------------------------------------------------
// Steppers.
// ---------------------------------------------------------------------------

struct SghmcState {
  std::vector<double> theta;
  std::vector<double> momentum;
  double beta = 0.9;  // momentum coefficient in [0, 1)
  std::int64_t step = 0;

  static SghmcState from(std::vector<double> theta0, double beta_) {
    if (beta_ < 0.0 || beta_ >= 1.0) throw ValidationError("beta must be in [0, 1)");
    SghmcState s;
    s.momentum.assign(theta0.size(), 0.0);
    s.theta = std::move(theta0);
    s.beta = beta_;
    return s;
  }
};

/// One SGHMC update:
///   theta_k = theta_{k-1} + m_{k-1}
///   m_k     = beta * m_{k-1} - (lr/2) * n * grad + sqrt((1-beta) * lr) * eps
/// where `grad` is the stochastic potential gradient evaluated at theta_k
/// (i.e. at the already-advanced position: callers compute it at
/// theta + momentum before stepping) and eps is omitted when noise is off.
inline void sghmc_step(SghmcState& state, std::span<const double> grad, double lr,
                       double dataset_size_n, bool noise_on, std::mt19937_64& rng) {
  if (grad.size() != state.theta.size())
    throw DimensionError("sghmc_step: gradient length mismatch");
  for (double g : grad)
    if (!std::isfinite(g))
      throw NumericalError("non-finite gradient at step " + std::to_string(state.step));

  const std::size_t d = state.theta.size();
  for (std::size_t i = 0; i < d; ++i) state.theta[i] += state.momentum[i];

  const double drift = 0.5 * lr * dataset_size_n;
  if (noise_on) {
    const double sigma = std::sqrt((1.0 - state.beta) * lr);
    std::normal_distribution<double> eps(0.0, 1.0);
    for (std::size_t i = 0; i < d; ++i)
      state.momentum[i] =
          state.beta * state.momentum[i] - drift * grad[i] + sigma * eps(rng);
  } else {
    for (std::size_t i = 0; i < d; ++i)
      state.momentum[i] = state.beta * state.momentum[i] - drift * grad[i];
  }
  ++state.step;
}

/// Plain SGD with momentum: v' = momentum * v - lr * grad; theta' = theta + v'.
inline void sgd_momentum_step(std::vector<double>& theta, std::vector<double>& velocity,
                              std::span<const double> grad, double lr,
                              double momentum = 0.99) {
  if (grad.size() != theta.size() || velocity.size() != theta.size())
    throw DimensionError("sgd_momentum_step: length mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericalError("non-finite gradient in SGD step");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    velocity[i] = momentum * velocity[i] - lr * grad[i];
    theta[i] += velocity[i];
  }
}

struct TrainConfig {
  std::size_t batch_size = 2;
  std::size_t dataset_size = 0;  // n
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  double momentum = 0.99;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (dataset_size < batch_size)
      throw ValidationError("dataset_size must be >= batch_size");
  }
};

// ---------------------------------------------------------------------------
// Snapshot collection.
// ---------------------------------------------------------------------------

struct CollectDecision {
  bool snapshot = false;
  std::size_t best_epoch_in_cycle = 0;  // offset of the min-loss epoch
};

/// Called at the end of each epoch with the per-epoch losses of the
/// current cycle so far. Fires once per post-burn-in cycle, restricted to
/// the final `sample_count` complete cycles, pointing at the epoch whose
/// loss is minimal within the cycle. Burn-in gates the collector only;
/// the chain itself runs identically.
inline CollectDecision collect_policy(const CyclicalSchedule& sched,
                                      std::size_t sample_count, std::size_t epoch,
                                      std::span<const double> cycle_losses) {
  if (epoch >= sched.total_epochs)
    throw ValidationError("collect_policy: epoch beyond schedule");
  CollectDecision d;
  const std::size_t in_cycle = epoch % sched.cycle_epochs;
  if (in_cycle + 1 != sched.cycle_epochs) return d;  // only at cycle end
  const std::size_t cycle = epoch / sched.cycle_epochs;
  if (cycle * sched.cycle_epochs < sched.burn_in_epochs) return d;  // burn-in
  const std::size_t total = sched.complete_cycles();
  if (total > sample_count && cycle < total - sample_count) return d;
  if (cycle_losses.size() != sched.cycle_epochs)
    throw UsageError("collect_policy: expected one loss per epoch of the cycle");
  d.snapshot = true;
  for (std::size_t i = 1; i < cycle_losses.size(); ++i)
    if (cycle_losses[i] < cycle_losses[d.best_epoch_in_cycle]) d.best_epoch_in_cycle = i;
  return d;
}

// ---------------------------------------------------------------------------
// Chain drivers.
// ---------------------------------------------------------------------------

struct SghmcRunResult {
  std::vector<std::vector<double>> snapshots;
  std::vector<std::size_t> snapshot_epochs;  // epoch whose params were kept
  std::vector<double> epoch_losses;
};

/// Runs a full cyclical SGHMC chain. `grad_loss(theta, epoch, step, grad_out)`
/// must fill grad_out with the stochastic potential gradient at `theta`
/// and return the corresponding loss; it is always evaluated at the
/// position the chain is about to occupy.
template <typename GradFn>
SghmcRunResult run_csghmc_chain(std::vector<double> theta0, double beta,
                                const CyclicalSchedule& sched, std::size_t sample_count,
                                double dataset_size_n, std::uint64_t noise_seed,
                                GradFn&& grad_loss) {
  sched.validate();
  if (sched.post_burn_in_cycles() < sample_count)
    throw ConfigError("schedule provides " + std::to_string(sched.post_burn_in_cycles()) +
                      " post-burn-in cycles, need " + std::to_string(sample_count));
  SghmcRunResult result;
  auto state = SghmcState::from(std::move(theta0), beta);
  auto noise_rng = make_rng(derive_seed(noise_seed, RngStream::sghmc_noise));

  const std::size_t d = state.theta.size();
  std::vector<double> lookahead(d), grad(d);
  std::vector<double> cycle_losses;
  std::vector<double> best_theta;
  double best_loss = 0.0;

  for (std::size_t epoch = 0; epoch < sched.total_epochs; ++epoch) {
    const bool noise_on = epoch >= sched.noise_start_epoch;
    double loss_acc = 0.0;
    for (std::size_t s = 0; s < sched.steps_per_epoch; ++s) {
      const double lr = cyclic_lr(sched, state.step);
      for (std::size_t i = 0; i < d; ++i)
        lookahead[i] = state.theta[i] + state.momentum[i];
      const double loss = grad_loss(std::span<const double>(lookahead), epoch, s, grad);
      if (!std::isfinite(loss))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(s));
      loss_acc += loss;
      sghmc_step(state, grad, lr, dataset_size_n, noise_on, noise_rng);
    }
    const double epoch_loss = loss_acc / static_cast<double>(sched.steps_per_epoch);
    result.epoch_losses.push_back(epoch_loss);

    if (cycle_losses.empty() || epoch_loss < best_loss) {
      best_loss = epoch_loss;
      best_theta = state.theta;
    }
    cycle_losses.push_back(epoch_loss);

    const auto decision = collect_policy(sched, sample_count, epoch, cycle_losses);
    if (decision.snapshot) {
      result.snapshots.push_back(best_theta);
      result.snapshot_epochs.push_back(epoch + 1 - sched.cycle_epochs +
                                       decision.best_epoch_in_cycle);
    }
    if (epoch % sched.cycle_epochs + 1 == sched.cycle_epochs) cycle_losses.clear();
  }
  return result;
}

/// Plain SGD-with-momentum run over the same GradFn protocol.
template <typename GradFn>
std::vector<double> run_sgd_chain(std::vector<double> theta, std::size_t epochs,
                                  std::size_t steps_per_epoch, double lr, double momentum,
                                  GradFn&& grad_loss,
                                  std::vector<double>* epoch_losses = nullptr) {
  std::vector<double> velocity(theta.size(), 0.0), grad(theta.size());
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    double loss_acc = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const double loss = grad_loss(std::span<const double>(theta), epoch, s, grad);
      if (!std::isfinite(loss))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(s));
      loss_acc += loss;
      sgd_momentum_step(theta, velocity, grad, lr, momentum);
    }
    if (epoch_losses)
      epoch_losses->push_back(loss_acc / static_cast<double>(steps_per_epoch));
  }
  return theta;
}

}  // namespace uq
