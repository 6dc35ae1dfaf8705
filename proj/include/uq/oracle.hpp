// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uq/errors.hpp"
#include "uq/rng.hpp"
#include "uq/samplers.hpp"

namespace uq {

// ---------------------------------------------------------------------------
// Bayesian linear regression with a known closed-form posterior: the
// quantitative yardstick for the sampler.
// ---------------------------------------------------------------------------

/// y ~ N(X theta, 1/beta_n), theta ~ N(0, (1/alpha) I).
struct ConjugateLinReg {
  std::size_t n = 0, d = 0;
  std::vector<double> x;  // row-major n x d
  std::vector<double> y;  // n
  double alpha = 1.0;     // prior precision
  double beta_n = 1.0;    // noise precision

  void validate() const {
    if (d == 0) throw ValidationError("linreg needs d >= 1");
    if (x.size() != n * d || y.size() != n)
      throw DimensionError("linreg: design matrix / target size mismatch");
    if (alpha <= 0.0 || beta_n <= 0.0)
      throw ValidationError("precisions must be > 0");
  }

  double xat(std::size_t i, std::size_t j) const { return x[i * d + j]; }
};

struct GaussianPosterior {
  std::vector<double> mean;  // d
  std::vector<double> cov;   // row-major d x d
  std::size_t d = 0;

  double cov_at(std::size_t i, std::size_t j) const { return cov[i * d + j]; }
};

namespace detail {

/// Cholesky factorization of a small SPD matrix (in place, lower factor).
inline std::vector<double> cholesky(std::vector<double> a, std::size_t d) {
  for (std::size_t j = 0; j < d; ++j) {
    double diag = a[j * d + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * d + k] * a[j * d + k];
    if (diag <= 0.0) throw NumericalError("matrix not positive definite");
    a[j * d + j] = std::sqrt(diag);
    for (std::size_t i = j + 1; i < d; ++i) {
      double v = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * d + k] * a[j * d + k];
      a[i * d + j] = v / a[j * d + j];
    }
  }
  // zero the strict upper triangle for cleanliness
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) a[i * d + j] = 0.0;
  return a;
}

/// Solves (L L^T) x = b given the lower Cholesky factor.
inline std::vector<double> cholesky_solve(const std::vector<double>& l, std::size_t d,
                                          std::vector<double> b) {
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= l[i * d + k] * b[k];
    b[i] /= l[i * d + i];
  }
  for (std::size_t i = d; i-- > 0;) {
    for (std::size_t k = i + 1; k < d; ++k) b[i] -= l[k * d + i] * b[k];
    b[i] /= l[i * d + i];
  }
  return b;
}

}  // namespace detail

/// Sigma = (alpha I + beta_n X^T X)^-1, mu = beta_n Sigma X^T y. An empty
/// design (n = 0) returns the prior.
inline GaussianPosterior analytic_posterior(const ConjugateLinReg& reg) {
  reg.validate();
  const std::size_t d = reg.d;
  std::vector<double> a(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) a[i * d + i] = reg.alpha;
  for (std::size_t r = 0; r < reg.n; ++r)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        a[i * d + j] += reg.beta_n * reg.xat(r, i) * reg.xat(r, j);

  const auto l = detail::cholesky(std::move(a), d);

  GaussianPosterior post;
  post.d = d;
  post.cov.assign(d * d, 0.0);
  for (std::size_t col = 0; col < d; ++col) {
    std::vector<double> e(d, 0.0);
    e[col] = 1.0;
    const auto sigma_col = detail::cholesky_solve(l, d, std::move(e));
    for (std::size_t i = 0; i < d; ++i) post.cov[i * d + col] = sigma_col[i];
  }

  std::vector<double> xty(d, 0.0);
  for (std::size_t r = 0; r < reg.n; ++r)
    for (std::size_t j = 0; j < d; ++j) xty[j] += reg.xat(r, j) * reg.y[r];
  post.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      post.mean[i] += reg.beta_n * post.cov_at(i, j) * xty[j];
  return post;
}

// ---------------------------------------------------------------------------
// SGHMC vs. analytic moments.
// ---------------------------------------------------------------------------

struct OracleSamplerConfig {
  double lr = 0.002;
  double beta = 0.5;
  std::size_t total_steps = 200000;
  std::size_t burn_in_steps = 20000;
  std::size_t thin = 10;
  std::uint64_t seed = 0;
};

struct MomentReport {
  std::vector<double> analytic_mean, empirical_mean;
  std::vector<double> analytic_var, empirical_var;  // diagonal
  std::vector<double> mean_abs_err, mean_rel_err, var_rel_err;
  std::size_t draws = 0;
  bool diverged = false;
  std::size_t diverged_step = 0;

  double worst_mean_rel_err() const {
    double w = 0.0;
    for (double e : mean_rel_err) w = std::max(w, e);
    return w;
  }
  double worst_var_rel_err() const {
    double w = 0.0;
    for (double e : var_rel_err) w = std::max(w, e);
    return w;
  }
};

/// Runs SGHMC on the negative log posterior of `reg` and compares chain
/// moments against the closed form. Gradient: Sigma^-1 (theta - mu),
/// computed directly from the data terms.
inline MomentReport sghmc_vs_analytic(const ConjugateLinReg& reg,
                                      const OracleSamplerConfig& cfg) {
  const auto post = analytic_posterior(reg);
  const std::size_t d = reg.d;

  MomentReport report;
  report.analytic_mean = post.mean;
  report.analytic_var.resize(d);
  for (std::size_t i = 0; i < d; ++i) report.analytic_var[i] = post.cov_at(i, i);

  // precompute A = alpha I + beta_n X^T X and b = beta_n X^T y
  std::vector<double> a(d * d, 0.0), b(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) a[i * d + i] = reg.alpha;
  for (std::size_t r = 0; r < reg.n; ++r)
    for (std::size_t i = 0; i < d; ++i) {
      b[i] += reg.beta_n * reg.xat(r, i) * reg.y[r];
      for (std::size_t j = 0; j < d; ++j)
        a[i * d + j] += reg.beta_n * reg.xat(r, i) * reg.xat(r, j);
    }

  auto state = SghmcState::from(std::vector<double>(d, 0.0), cfg.beta);
  auto rng = make_rng(derive_seed(cfg.seed, RngStream::sghmc_noise));

  std::vector<double> grad(d), look(d);
  std::vector<double> sum(d, 0.0), sum_sq(d, 0.0);
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    for (std::size_t i = 0; i < d; ++i) look[i] = state.theta[i] + state.momentum[i];
    for (std::size_t i = 0; i < d; ++i) {
      double g = -b[i];
      for (std::size_t j = 0; j < d; ++j) g += a[i * d + j] * look[j];
      grad[i] = g;
    }
    sghmc_step(state, grad, cfg.lr, 1.0, true, rng);
    for (double v : state.theta)
      if (!std::isfinite(v)) {
        report.diverged = true;
        report.diverged_step = step;
        return report;
      }
    if (step >= cfg.burn_in_steps && (step - cfg.burn_in_steps) % cfg.thin == 0) {
      ++report.draws;
      for (std::size_t i = 0; i < d; ++i) {
        sum[i] += state.theta[i];
        sum_sq[i] += state.theta[i] * state.theta[i];
      }
    }
  }

  const double nd = static_cast<double>(report.draws);
  report.empirical_mean.resize(d);
  report.empirical_var.resize(d);
  report.mean_abs_err.resize(d);
  report.mean_rel_err.resize(d);
  report.var_rel_err.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    report.empirical_mean[i] = sum[i] / nd;
    report.empirical_var[i] =
        sum_sq[i] / nd - report.empirical_mean[i] * report.empirical_mean[i];
    report.mean_abs_err[i] = std::abs(report.empirical_mean[i] - post.mean[i]);
    report.mean_rel_err[i] = report.mean_abs_err[i] / std::abs(post.mean[i]);
    report.var_rel_err[i] =
        std::abs(report.empirical_var[i] - report.analytic_var[i]) /
        report.analytic_var[i];
  }
  return report;
}

// ---------------------------------------------------------------------------
// Two-mode model: y_i ~ w^2 x_i, posterior over w symmetric with modes at
// +/- w*. The crisp testbed for multimodal capture.
// ---------------------------------------------------------------------------

struct TwoModeModel {
  std::vector<double> xs, ys;
  double noise_prec = 4.0;   // 1 / sigma^2
  double prior_prec = 0.1;
  double true_w = 1.0;       // |mode location| scale

  /// Negative log posterior (up to a constant).
  double potential(double w) const {
    const double w2 = w * w;
    double acc = 0.5 * prior_prec * w2;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = ys[i] - w2 * xs[i];
      acc += 0.5 * noise_prec * r * r;
    }
    return acc;
  }

  double potential_grad(double w) const {
    const double w2 = w * w;
    double acc = prior_prec * w;
    for (std::size_t i = 0; i < xs.size(); ++i)
      acc += noise_prec * (w2 * xs[i] - ys[i]) * 2.0 * w * xs[i];
    return acc;
  }
};

inline TwoModeModel make_two_mode_model(std::size_t n_points, double w_star,
                                        double noise_sigma, std::uint64_t seed) {
  TwoModeModel m;
  m.true_w = w_star;
  m.noise_prec = 1.0 / (noise_sigma * noise_sigma);
  auto rng = make_rng(derive_seed(seed, RngStream::data_gen));
  std::uniform_real_distribution<double> ux(0.5, 1.5);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double x = ux(rng);
    m.xs.push_back(x);
    m.ys.push_back(w_star * w_star * x + noise(rng));
  }
  return m;
}

/// Counts sign classes among snapshots with |w| > 0.5 w*.
inline int mode_visit_count(const TwoModeModel& model, std::span<const double> snapshots) {
  bool pos = false, neg = false;
  for (double w : snapshots) {
    if (std::abs(w) > 0.5 * model.true_w) (w > 0.0 ? pos : neg) = true;
  }
  return static_cast<int>(pos) + static_cast<int>(neg);
}

/// Cyclical SGHMC on the scalar two-mode posterior; returns collected
/// end-of-cycle snapshots of w.
inline std::vector<double> run_two_mode_csghmc(const TwoModeModel& model,
                                               const CyclicalSchedule& schedule,
                                               std::size_t sample_count, double beta,
                                               std::uint64_t seed) {
  auto init_rng = make_rng(derive_seed(seed, RngStream::model_init));
  std::normal_distribution<double> init(0.0, 1.0);
  auto grad_fn = [&model](std::span<const double> theta, std::size_t, std::size_t,
                          std::vector<double>& grad) {
    grad[0] = model.potential_grad(theta[0]);
    return model.potential(theta[0]);
  };
  const auto run = run_csghmc_chain({init(init_rng)}, beta, schedule, sample_count, 1.0,
                                    seed, grad_fn);
  std::vector<double> ws;
  for (const auto& snap : run.snapshots) ws.push_back(snap[0]);
  return ws;
}

/// Single-mode baseline: plain SGD with momentum on the same potential.
inline double run_two_mode_map(const TwoModeModel& model, double lr, std::size_t steps,
                               double momentum, std::uint64_t seed) {
  auto init_rng = make_rng(derive_seed(seed, RngStream::model_init));
  std::normal_distribution<double> init(0.0, 1.0);
  std::vector<double> theta{init(init_rng)}, velocity{0.0}, grad(1);
  for (std::size_t k = 0; k < steps; ++k) {
    grad[0] = model.potential_grad(theta[0]);
    sgd_momentum_step(theta, velocity, grad, lr, momentum);
  }
  return theta[0];
}

}  // namespace uq
