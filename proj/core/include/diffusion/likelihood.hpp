#pragma once

#include <vector>

#include "diffusion/bound.hpp"
#include "diffusion/models.hpp"

namespace diffusion {

struct LogLikelihoodEstimate {
  double log_nats = 0.0;
  double stderr_nats = 0.0;
};

/// Importance-weighted estimate of log p(x0): average, over forward
/// trajectories from q(. | x0), of
///   p(x^T) * prod_t p(x^{t-1} | x^t) / q(x^t | x^{t-1}),
/// combined with a max-shifted log-mean-exp so long chains cannot
/// underflow. The standard error comes from the shifted weight population
/// by the delta method. Raises if every weight is -inf.
LogLikelihoodEstimate estimate_log_likelihood(const DiffusionSpec& spec,
                                              const ReverseModel& model,
                                              const std::vector<double>& x0, int n_traj,
                                              Rng& rng);

/// Raw per-trajectory log weights (the quantity averaged above).
std::vector<double> importance_log_weights(const DiffusionSpec& spec, const ReverseModel& model,
                                           const std::vector<double>& x0, int n_traj, Rng& rng);

}  // namespace diffusion
