#pragma once

#include "diffusion/mat.hpp"
#include "diffusion/schedule.hpp"

namespace diffusion {

/// Analytic bounds on the conditional entropy of one reverse step,
/// H_q(X^{t-1} | X^t), derived entirely from the forward process:
///   upper = H_q(X^t | X^{t-1})
///   lower = upper + H_q(X^{t-1} | X^0) - H_q(X^t | X^0)
struct EntropyBoundReport {
  int t = 0;
  double lower_nats = 0.0;
  double upper_nats = 0.0;
};

/// Gaussian kind requires the batch to be standardized (pooled variance 1
/// within 5%), since the upper bound rests on the equilibrium distribution
/// being the entropy maximizer; unscaled data is rejected. Binomial
/// x0-conditional terms are averaged over the batch.
EntropyBoundReport entropy_bounds(const DiffusionSpec& spec, int t, const Mat& x0_batch);

}  // namespace diffusion
