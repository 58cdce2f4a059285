#pragma once

#include <vector>

#include "diffusion/distribution.hpp"
#include "diffusion/rng.hpp"
#include "diffusion/schedule.hpp"

namespace diffusion {

// Numeric floors applied before any logarithm. Rates are kept inside
// [kRateFloor, 1 - kRateFloor]; Gaussian variances at or above kVarFloor.
inline constexpr double kRateFloor = 1e-7;
inline constexpr double kVarFloor = 1e-12;

double clamp_rate(double r);
double clamp_var(double v);

/// One forward diffusion step x^{t-1} -> x^t.
/// Gaussian: draw from N(x_prev * sqrt(1-beta_t), beta_t I).
/// Binomial: each bit resampled to 1 with rate x_prev*(1-beta_t) + beta_t/2.
std::vector<double> forward_step(const DiffusionSpec& spec, const std::vector<double>& x_prev,
                                 int t, Rng& rng);

/// Closed form of t composed forward steps from x0.
/// Gaussian: N(sqrt(cum_t) x0, (1 - cum_t) I); binomial rate
/// cum_t * x0 + (1 - cum_t)/2 per bit.
DiagonalDistribution forward_marginal(const DiffusionSpec& spec, const std::vector<double>& x0,
                                      int t);

/// The two-sided conditional q(x^{t-1} | x^t, x^0) for t >= 2; t = 1 is
/// owned by the fixed edge kernel and rejected here.
DiagonalDistribution forward_posterior(const DiffusionSpec& spec, const std::vector<double>& x0,
                                       const std::vector<double>& xt, int t);

/// KL(q || p) in nats for same-kind diagonal distributions; p components are
/// floored before the logs, q-side uses the 0*log 0 = 0 convention.
double kl_divergence(const DiagonalDistribution& q, const DiagonalDistribution& p);

/// Differential / discrete entropy in nats.
double entropy(const DiagonalDistribution& dist);

/// Log density (gaussian) or log pmf (binomial, x in {0,1}^d) in nats.
double log_density(const DiagonalDistribution& dist, const std::vector<double>& x);

std::vector<double> sample(const DiagonalDistribution& dist, Rng& rng);

}  // namespace diffusion
