#pragma once

#include <vector>

#include "diffusion/kernels.hpp"
#include "diffusion/models.hpp"
#include "diffusion/params.hpp"
#include "diffusion/schedule.hpp"

namespace diffusion {

/// Per-step Gaussian draws bound to a batch; holding them fixed makes the
/// simulated trajectory a deterministic, differentiable function of the
/// schedule parameters.
struct FrozenNoise {
  std::vector<Mat> eps;  // steps entries, each [n, d]
};

FrozenNoise draw_frozen_noise(int steps, int n, int dim, Rng& rng);

/// States x^(1..T) from x0 under frozen noise:
///   x^(t) = sqrt(1 - beta_t) x^(t-1) + sqrt(beta_t) eps_t.
/// Returned vector is indexed by t with entry 0 equal to x0. Binomial kind
/// is rejected (no usable gradient through a discrete resampling chain).
std::vector<Mat> frozen_noise_trajectory(const DiffusionSpec& spec, const Mat& x0,
                                         const FrozenNoise& noise);
std::vector<std::vector<double>> frozen_noise_trajectory(const DiffusionSpec& spec,
                                                         const std::vector<double>& x0,
                                                         const FrozenNoise& noise);

/// The untrained final reverse step: the forward kernel with arguments
/// swapped, which cancels the t = 1 term of the bound.
DiagonalDistribution edge_reverse_kernel(const DiffusionSpec& spec,
                                         const std::vector<double>& x1);

/// Frozen randomness for one bound evaluation: the batch, the evaluated time
/// subset, and either a noise chain (gaussian, schedule-differentiable) or
/// direct marginal draws. Reused across parameter evaluations so gradient
/// checks see a deterministic objective.
struct BoundWorkspace {
  Mat x0;                // [n, d]
  std::vector<int> ts;   // evaluated subset of 2..T, ascending
  double t_scale = 1.0;  // (T-1) / |ts|
  bool chain_mode = false;
  FrozenNoise noise;     // chain mode
  std::vector<Mat> xt;   // marginal mode, one [n, d] per ts entry
};

/// Chain workspace over the full time sum (gaussian only).
BoundWorkspace make_chain_workspace(const DiffusionSpec& spec, Mat x0, FrozenNoise noise);

/// Marginal workspace: one x^t draw per (datum, t). t_subsample = 0 keeps
/// the full sum; k > 0 draws k distinct time indices and rescales.
BoundWorkspace make_marginal_workspace(const DiffusionSpec& spec, Mat x0, Rng& rng,
                                       int t_subsample);

/// Per-term decomposition of the variational lower bound, batch-averaged,
/// in nats (totals also in bits per datum).
struct BoundBreakdown {
  std::vector<int> ts;
  std::vector<double> kl_nats;  // batch mean per evaluated t, each >= 0
  double kl_sum_nats = 0.0;     // subsample-rescaled sum
  double h_end_nats = 0.0;      // H_q(X^T | X^0)
  double h_first_nats = 0.0;    // H_q(X^1 | X^0)
  double h_equilibrium_nats = 0.0;
  double total_nats = 0.0;
  double total_bits = 0.0;
  double stderr_nats = 0.0;  // Monte Carlo standard error over the batch
  bool subsampled = false;
};

/// Bound evaluation without gradients (plain batched math).
BoundBreakdown eval_bound(const DiffusionSpec& spec, const ReverseModel& model,
                          const BoundWorkspace& ws);

/// Convenience: draw a workspace and evaluate. A non-finite term raises,
/// naming the offending time index.
BoundBreakdown bound_terms(const DiffusionSpec& spec, const ReverseModel& model, const Mat& x0,
                           Rng& rng, int t_subsample = 0);

/// Bound as a tape scalar (batch-mean nats) for gradient work. With
/// learn_schedule the workspace must be in chain mode and the binder's
/// parameter vector must carry sched.u.<t> entries for t in 2..T.
Var build_bound_graph(Tape& tape, ParamBinder& binder, const DiffusionSpec& spec,
                      const ReverseModel& model, const BoundWorkspace& ws, bool learn_schedule);

/// Name of the unconstrained schedule entry driving beta_t.
std::string schedule_entry_name(int t);

/// Mean log density of the data under the equilibrium distribution, in bits
/// per datum.
double null_baseline_bits(const DiffusionSpec& spec, const Mat& data);

}  // namespace diffusion
