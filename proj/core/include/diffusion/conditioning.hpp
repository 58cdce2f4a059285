#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "diffusion/models.hpp"

namespace diffusion {

/// Second distribution r(x) multiplied into the generative chain.
struct ExternalFactor {
  enum class Kind { coordinate_mask, gaussian_observation, generic };

  Kind kind = Kind::coordinate_mask;

  // coordinate_mask: delta on observed coordinates, constant elsewhere.
  std::vector<std::uint8_t> mask;  // 1 = observed
  std::vector<double> observed;

  // gaussian_observation: r(x) = N(y; x, sigma_r2 I).
  std::vector<double> y;
  double sigma_r2 = 1.0;

  // generic: log-gradient callback (gaussian) or per-bit evidence
  // d_i = r(x_i = 1) (binomial).
  std::function<std::vector<double>(const std::vector<double>&)> grad_log_r;
  std::vector<double> bit_evidence;

  static ExternalFactor coordinate_mask_factor(std::vector<std::uint8_t> mask,
                                               std::vector<double> observed);
  static ExternalFactor gaussian_observation_factor(std::vector<double> y, double sigma_r2);
  static ExternalFactor generic_gaussian(
      std::function<std::vector<double>(const std::vector<double>&)> grad_log_r);
  static ExternalFactor generic_binomial(std::vector<double> bit_evidence);
};

/// How strongly r applies along the trajectory: at full strength everywhere,
/// or annealed with exponent (T - t)/T so the initial draw at t = T is
/// untouched equilibrium.
enum class RSchedule { constant, annealed };

/// First-order tilt of a gaussian kernel by r: the mean moves by
/// covariance * grad log r (evaluated at the unperturbed mean), the
/// covariance is unchanged.
DiagonalDistribution perturbed_gaussian_kernel(const DiagonalDistribution& moments,
                                               const std::vector<double>& grad_log_r);

/// Exact per-dimension conjugate product of a gaussian kernel with the
/// observation factor N(y; x, sigma_r2 I).
DiagonalDistribution exact_gaussian_product(const DiagonalDistribution& moments,
                                            const std::vector<double>& y, double sigma_r2);

/// Bayes-normalized product of Bernoulli(c) with per-bit evidence d:
///   rate'_i = c_i d_i / (c_i d_i + (1 - c_i)(1 - d_i)).
/// Inputs are floored away from {0,1} so the ratio is always defined.
std::vector<double> perturbed_binomial_kernel(const std::vector<double>& c,
                                              const std::vector<double>& d_r);

/// Per-step log normalization constants where the multiplication has a
/// closed form; the gaussian perturbative path leaves them implicit and
/// only sets the marker.
struct NormalizerLedger {
  std::vector<int> ts;
  std::vector<double> log_z;  // batch mean per recorded step
  bool perturbative_implicit = false;
};

/// Sample x^0 from the model multiplied by `factor`. Known coordinates of a
/// mask factor are clamped at every step including initialization (constant
/// schedule); gaussian observations multiply each kernel exactly; generic
/// factors tilt each kernel perturbatively.
Mat sample_conditional(const DiffusionSpec& spec, const ReverseModel& model,
                       const ExternalFactor& factor, RSchedule r_sched, int n, Rng& rng,
                       NormalizerLedger* ledger = nullptr);

}  // namespace diffusion
