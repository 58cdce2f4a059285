#pragma once

#include <vector>

#include "diffusion/distribution.hpp"

namespace diffusion {

enum class ScheduleMode { fixed_rule, learnable };

/// Diffusion-rate sequence beta_1..T together with the cumulative signal
/// fractions cum_t = prod_{s<=t} (1 - beta_s) (the remaining signal after t
/// steps). In learnable mode beta_1 stays frozen and beta_t = logistic(u_t)
/// for t >= 2, so rates remain inside (0, 1) under unconstrained updates.
struct Schedule {
  ProcessKind kind = ProcessKind::gaussian;
  int steps = 0;  // T
  ScheduleMode mode = ScheduleMode::fixed_rule;
  double beta1 = 0.0;
  std::vector<double> beta;  // size T, index t-1
  std::vector<double> cum;   // size T, index t-1
  std::vector<double> u;     // size T-1 in learnable mode, u[t-2] drives beta_t

  double beta_at(int t) const { return beta[static_cast<std::size_t>(t) - 1]; }
  double cum_at(int t) const { return cum[static_cast<std::size_t>(t) - 1]; }
  /// cum_{t-1} with the t=1 convention cum_0 = 1 (no signal destroyed yet).
  double cum_before(int t) const { return t <= 1 ? 1.0 : cum_at(t - 1); }

  bool learnable() const { return mode == ScheduleMode::learnable; }

  /// Recompute beta and cum from u (learnable mode only).
  void refresh_from_u();
};

/// Build a schedule. Fixed mode uses beta_t = 1/(T-t+1), which destroys a
/// constant fraction 1/T of the original signal per step and reaches rate 1
/// at t = T. Learnable mode freezes beta_1 = beta1 and initializes the T-1
/// unconstrained parameters at the fixed rule (capped below 1 so the
/// logistic transform stays finite).
///
/// Throws std::invalid_argument for T < 1, beta1 outside (0, 1), or a
/// learnable binomial request (discrete chains have no usable rate gradient).
Schedule make_schedule(ProcessKind kind, int steps, double beta1, ScheduleMode mode);

/// Fixed schedule from explicit rates (each in (0, 1]); cumulative products
/// are derived. Used for hand-built configurations.
Schedule schedule_from_rates(ProcessKind kind, const std::vector<double>& rates);

/// Schedule plus data dimension; the equilibrium distribution is implied by
/// the kind (standard Gaussian or independent Bernoulli(0.5)).
struct DiffusionSpec {
  Schedule schedule;
  int dim = 0;

  ProcessKind kind() const { return schedule.kind; }
  int steps() const { return schedule.steps; }
  DiagonalDistribution equilibrium() const;
};

double logistic(double x);
double logit(double p);

}  // namespace diffusion
