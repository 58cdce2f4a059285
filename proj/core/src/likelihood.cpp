#include "diffusion/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace diffusion {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_gaussian(double x, double mean, double var) {
  const double v = clamp_var(var);
  const double dm = x - mean;
  return -0.5 * (kLog2Pi + std::log(v)) - 0.5 * dm * dm / v;
}

double log_bernoulli(double x, double rate) {
  const double r = clamp_rate(rate);
  return x > 0.5 ? std::log(r) : std::log(1.0 - r);
}

}  // namespace

std::vector<double> importance_log_weights(const DiffusionSpec& spec, const ReverseModel& model,
                                           const std::vector<double>& x0, int n_traj, Rng& rng) {
  require_compatible(spec, model);
  if (n_traj < 1) throw std::invalid_argument("importance_log_weights: n_traj must be >= 1");
  if (static_cast<int>(x0.size()) != spec.dim)
    throw std::invalid_argument("importance_log_weights: dimension mismatch");

  const int d = spec.dim;
  const int T = spec.steps();
  const bool gaussian = spec.kind() == ProcessKind::gaussian;

  std::vector<Rng> streams;
  streams.reserve(n_traj);
  for (int k = 0; k < n_traj; ++k) streams.push_back(rng.split(static_cast<std::uint64_t>(k)));

  Mat prev(n_traj, d);
  for (int k = 0; k < n_traj; ++k) prev.set_row(k, x0);

  std::vector<double> logw(n_traj, 0.0);
  Mat cur(n_traj, d), mean_or_rate, var;

  for (int t = 1; t <= T; ++t) {
    const double beta = spec.schedule.beta_at(t);
    const double keep = gaussian ? std::sqrt(1.0 - beta) : 0.0;

    // Draw x^t ~ q(x^t | x^{t-1}) and charge the forward density.
    for (int k = 0; k < n_traj; ++k) {
      Rng& r = streams[k];
      for (int j = 0; j < d; ++j) {
        if (gaussian) {
          const double m = keep * prev(k, j);
          cur(k, j) = m + std::sqrt(beta) * r.normal();
          logw[k] -= log_gaussian(cur(k, j), m, beta);
        } else {
          const double m = prev(k, j) * (1.0 - beta) + 0.5 * beta;
          cur(k, j) = r.bernoulli(m) ? 1.0 : 0.0;
          logw[k] -= log_bernoulli(cur(k, j), m);
        }
      }
    }

    // Credit the reverse kernel density at x^{t-1}: the model for t >= 2,
    // the fixed edge kernel for t = 1.
    if (t >= 2) {
      if (gaussian) {
        model.apply_batch(cur, t, beta, mean_or_rate, &var);
        for (int k = 0; k < n_traj; ++k)
          for (int j = 0; j < d; ++j)
            logw[k] += log_gaussian(prev(k, j), mean_or_rate(k, j), var(k, j));
      } else {
        model.apply_batch(cur, t, beta, mean_or_rate, nullptr);
        for (int k = 0; k < n_traj; ++k)
          for (int j = 0; j < d; ++j) logw[k] += log_bernoulli(prev(k, j), mean_or_rate(k, j));
      }
    } else {
      for (int k = 0; k < n_traj; ++k) {
        const DiagonalDistribution edge = edge_reverse_kernel(spec, cur.row_vector(k));
        logw[k] += log_density(edge, prev.row_vector(k));
      }
    }
    std::swap(prev, cur);
  }

  const DiagonalDistribution pi = spec.equilibrium();
  for (int k = 0; k < n_traj; ++k) logw[k] += log_density(pi, prev.row_vector(k));
  return logw;
}

LogLikelihoodEstimate estimate_log_likelihood(const DiffusionSpec& spec,
                                              const ReverseModel& model,
                                              const std::vector<double>& x0, int n_traj,
                                              Rng& rng) {
  const std::vector<double> logw = importance_log_weights(spec, model, x0, n_traj, rng);
  const double shift = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(shift))
    throw std::runtime_error("estimate_log_likelihood: all importance weights are -inf");

  const int n = static_cast<int>(logw.size());
  double mean_u = 0.0;
  for (double w : logw) mean_u += std::exp(w - shift);
  mean_u /= n;

  double var_u = 0.0;
  for (double w : logw) {
    const double u = std::exp(w - shift);
    var_u += (u - mean_u) * (u - mean_u);
  }
  var_u = n > 1 ? var_u / (n - 1.0) : 0.0;

  LogLikelihoodEstimate est;
  est.log_nats = shift + std::log(mean_u);
  est.stderr_nats = n > 1 ? std::sqrt(var_u / n) / mean_u : 0.0;
  return est;
}

}  // namespace diffusion
