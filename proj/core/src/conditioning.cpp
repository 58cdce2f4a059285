#include "diffusion/conditioning.hpp"

#include <cmath>
#include <stdexcept>

#include "diffusion/bound.hpp"
#include "diffusion/kernels.hpp"

namespace diffusion {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_gaussian(double x, double mean, double var) {
  const double dm = x - mean;
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * dm * dm / var;
}

// Evidence annealed to exponent lambda: d^l / (d^l + (1-d)^l).
double anneal_bit(double d, double lambda) {
  const double a = std::pow(clamp_rate(d), lambda);
  const double b = std::pow(clamp_rate(1.0 - d), lambda);
  return a / (a + b);
}

void check_factor(const DiffusionSpec& spec, const ExternalFactor& f) {
  const int d = spec.dim;
  switch (f.kind) {
    case ExternalFactor::Kind::coordinate_mask:
      if (static_cast<int>(f.mask.size()) != d || static_cast<int>(f.observed.size()) != d)
        throw std::invalid_argument("factor: mask/observed dimension mismatch");
      if (spec.kind() == ProcessKind::binomial)
        for (std::size_t i = 0; i < f.mask.size(); ++i)
          if (f.mask[i] && f.observed[i] != 0.0 && f.observed[i] != 1.0)
            throw std::invalid_argument("factor: binomial observations must be bits");
      break;
    case ExternalFactor::Kind::gaussian_observation:
      if (spec.kind() != ProcessKind::gaussian)
        throw std::invalid_argument("factor: gaussian observation needs gaussian diffusion");
      if (static_cast<int>(f.y.size()) != d)
        throw std::invalid_argument("factor: observation dimension mismatch");
      if (!(f.sigma_r2 > 0.0)) throw std::invalid_argument("factor: sigma_r2 must be positive");
      break;
    case ExternalFactor::Kind::generic:
      if (spec.kind() == ProcessKind::gaussian) {
        if (!f.grad_log_r) throw std::invalid_argument("factor: grad_log_r callback required");
      } else {
        if (static_cast<int>(f.bit_evidence.size()) != d)
          throw std::invalid_argument("factor: bit evidence dimension mismatch");
        for (double v : f.bit_evidence)
          if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("factor: bit evidence outside [0,1]");
      }
      break;
  }
}

}  // namespace

ExternalFactor ExternalFactor::coordinate_mask_factor(std::vector<std::uint8_t> mask,
                                                      std::vector<double> observed) {
  if (mask.size() != observed.size())
    throw std::invalid_argument("factor: mask/observed size mismatch");
  ExternalFactor f;
  f.kind = Kind::coordinate_mask;
  f.mask = std::move(mask);
  f.observed = std::move(observed);
  return f;
}

ExternalFactor ExternalFactor::gaussian_observation_factor(std::vector<double> y,
                                                           double sigma_r2) {
  if (!(sigma_r2 > 0.0)) throw std::invalid_argument("factor: sigma_r2 must be positive");
  ExternalFactor f;
  f.kind = Kind::gaussian_observation;
  f.y = std::move(y);
  f.sigma_r2 = sigma_r2;
  return f;
}

ExternalFactor ExternalFactor::generic_gaussian(
    std::function<std::vector<double>(const std::vector<double>&)> grad_log_r) {
  ExternalFactor f;
  f.kind = Kind::generic;
  f.grad_log_r = std::move(grad_log_r);
  return f;
}

ExternalFactor ExternalFactor::generic_binomial(std::vector<double> bit_evidence) {
  ExternalFactor f;
  f.kind = Kind::generic;
  f.bit_evidence = std::move(bit_evidence);
  return f;
}

DiagonalDistribution perturbed_gaussian_kernel(const DiagonalDistribution& moments,
                                               const std::vector<double>& grad_log_r) {
  if (moments.kind != DiagonalDistribution::Kind::gaussian)
    throw std::invalid_argument("perturbed_gaussian_kernel: gaussian moments required");
  if (grad_log_r.size() != moments.mean.size())
    throw std::invalid_argument("perturbed_gaussian_kernel: gradient dimension mismatch");
  std::vector<double> mean(moments.mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i)
    mean[i] = moments.mean[i] + moments.var[i] * grad_log_r[i];
  return DiagonalDistribution::gaussian(std::move(mean), moments.var);
}

DiagonalDistribution exact_gaussian_product(const DiagonalDistribution& moments,
                                            const std::vector<double>& y, double sigma_r2) {
  if (moments.kind != DiagonalDistribution::Kind::gaussian)
    throw std::invalid_argument("exact_gaussian_product: gaussian moments required");
  if (y.size() != moments.mean.size())
    throw std::invalid_argument("exact_gaussian_product: dimension mismatch");
  if (!(sigma_r2 > 0.0)) throw std::invalid_argument("exact_gaussian_product: sigma_r2 <= 0");
  std::vector<double> mean(y.size()), var(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    var[i] = 1.0 / (1.0 / moments.var[i] + 1.0 / sigma_r2);
    mean[i] = var[i] * (moments.mean[i] / moments.var[i] + y[i] / sigma_r2);
  }
  return DiagonalDistribution::gaussian(std::move(mean), std::move(var));
}

std::vector<double> perturbed_binomial_kernel(const std::vector<double>& c,
                                              const std::vector<double>& d_r) {
  if (c.size() != d_r.size())
    throw std::invalid_argument("perturbed_binomial_kernel: dimension mismatch");
  std::vector<double> rate(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double cc = clamp_rate(c[i]);
    const double dd = clamp_rate(d_r[i]);
    rate[i] = cc * dd / (cc * dd + (1.0 - cc) * (1.0 - dd));
  }
  return rate;
}

Mat sample_conditional(const DiffusionSpec& spec, const ReverseModel& model,
                       const ExternalFactor& factor, RSchedule r_sched, int n, Rng& rng,
                       NormalizerLedger* ledger) {
  require_compatible(spec, model);
  check_factor(spec, factor);
  if (n < 1) throw std::invalid_argument("sample_conditional: n must be >= 1");

  const int d = spec.dim;
  const int T = spec.steps();
  const bool gaussian = spec.kind() == ProcessKind::gaussian;
  auto lambda_at = [&](int state_t) {
    return r_sched == RSchedule::annealed ? static_cast<double>(T - state_t) / T : 1.0;
  };

  if (ledger) {
    *ledger = NormalizerLedger{};
    if (factor.kind == ExternalFactor::Kind::generic && gaussian)
      ledger->perturbative_implicit = true;
  }

  std::vector<Rng> streams;
  streams.reserve(n);
  for (int i = 0; i < n; ++i) streams.push_back(rng.split(static_cast<std::uint64_t>(i)));

  // Applies the factor (at strength lambda) to per-row kernel moments, then
  // samples row i. Returns the log normalization constant where closed-form.
  auto tilt_and_sample = [&](DiagonalDistribution k, double lambda, int i,
                             std::vector<double>& out) -> double {
    double log_z = 0.0;
    if (lambda == 0.0) {
      out = sample(k, streams[i]);
      return 0.0;
    }
    switch (factor.kind) {
      case ExternalFactor::Kind::coordinate_mask: {
        // Delta on known coordinates: exact product clamps them.
        out = sample(k, streams[i]);
        for (int j = 0; j < d; ++j)
          if (factor.mask[j]) {
            if (gaussian)
              log_z += log_gaussian(factor.observed[j], k.mean[j], k.var[j]);
            else
              log_z += std::log(factor.observed[j] > 0.5 ? clamp_rate(k.rate[j])
                                                         : 1.0 - clamp_rate(k.rate[j]));
            out[j] = factor.observed[j];
          }
        return log_z;
      }
      case ExternalFactor::Kind::gaussian_observation: {
        const double sig_eff = factor.sigma_r2 / lambda;
        for (int j = 0; j < d; ++j)
          log_z += log_gaussian(factor.y[j], k.mean[j], k.var[j] + sig_eff);
        const DiagonalDistribution tilted = exact_gaussian_product(k, factor.y, sig_eff);
        out = sample(tilted, streams[i]);
        return log_z;
      }
      case ExternalFactor::Kind::generic: {
        if (gaussian) {
          std::vector<double> g = factor.grad_log_r(k.mean);
          if (static_cast<int>(g.size()) != d)
            throw std::invalid_argument("factor: grad_log_r returned wrong dimension");
          for (double& v : g) v *= lambda;
          out = sample(perturbed_gaussian_kernel(k, g), streams[i]);
          return 0.0;
        }
        std::vector<double> d_l(d);
        for (int j = 0; j < d; ++j) {
          d_l[j] = anneal_bit(factor.bit_evidence[j], lambda);
          const double cc = clamp_rate(k.rate[j]);
          const double dd = clamp_rate(d_l[j]);
          log_z += std::log(cc * dd + (1.0 - cc) * (1.0 - dd));
        }
        const std::vector<double> tilted = perturbed_binomial_kernel(k.rate, d_l);
        out = sample(DiagonalDistribution::bernoulli(tilted), streams[i]);
        return log_z;
      }
    }
    return 0.0;
  };

  // Initialization at t = T from the tilted equilibrium.
  Mat X(n, d);
  const DiagonalDistribution pi = spec.equilibrium();
  {
    const double lambda = lambda_at(T);
    double z_acc = 0.0;
    std::vector<double> row;
    for (int i = 0; i < n; ++i) {
      z_acc += tilt_and_sample(pi, lambda, i, row);
      X.set_row(i, row);
    }
    if (ledger && !ledger->perturbative_implicit) {
      ledger->ts.push_back(T);
      ledger->log_z.push_back(z_acc / n);
    }
  }

  Mat mean_or_rate, var;
  std::vector<double> row;
  for (int t = T; t >= 1; --t) {
    const double beta = spec.schedule.beta_at(t);
    const double lambda = lambda_at(t - 1);
    double z_acc = 0.0;
    if (t >= 2) {
      if (gaussian)
        model.apply_batch(X, t, beta, mean_or_rate, &var);
      else
        model.apply_batch(X, t, beta, mean_or_rate, nullptr);
      for (int i = 0; i < n; ++i) {
        DiagonalDistribution k =
            gaussian ? DiagonalDistribution::gaussian(mean_or_rate.row_vector(i),
                                                      var.row_vector(i))
                     : DiagonalDistribution::bernoulli(mean_or_rate.row_vector(i));
        z_acc += tilt_and_sample(std::move(k), lambda, i, row);
        X.set_row(i, row);
      }
    } else {
      for (int i = 0; i < n; ++i) {
        z_acc += tilt_and_sample(edge_reverse_kernel(spec, X.row_vector(i)), lambda, i, row);
        X.set_row(i, row);
      }
    }
    if (ledger && !ledger->perturbative_implicit) {
      ledger->ts.push_back(t - 1);
      ledger->log_z.push_back(z_acc / n);
    }
  }
  return X;
}

}  // namespace diffusion
