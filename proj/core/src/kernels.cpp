#include "diffusion/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace diffusion {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

void check_t(const DiffusionSpec& spec, int t, int t_min) {
  if (t < t_min || t > spec.steps()) throw std::invalid_argument("time index out of range");
}

void check_dim(const DiffusionSpec& spec, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != spec.dim)
    throw std::invalid_argument("state dimension mismatch");
}

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

}  // namespace

double clamp_rate(double r) { return std::clamp(r, kRateFloor, 1.0 - kRateFloor); }
double clamp_var(double v) { return std::max(v, kVarFloor); }

std::vector<double> forward_step(const DiffusionSpec& spec, const std::vector<double>& x_prev,
                                 int t, Rng& rng) {
  check_t(spec, t, 1);
  check_dim(spec, x_prev);
  const double beta = spec.schedule.beta_at(t);
  std::vector<double> out(x_prev.size());
  if (spec.kind() == ProcessKind::gaussian) {
    const double keep = std::sqrt(1.0 - beta);
    const double noise = std::sqrt(beta);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = x_prev[i] * keep + noise * rng.normal();
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double r = x_prev[i] * (1.0 - beta) + 0.5 * beta;
      out[i] = rng.bernoulli(r) ? 1.0 : 0.0;
    }
  }
  return out;
}

DiagonalDistribution forward_marginal(const DiffusionSpec& spec, const std::vector<double>& x0,
                                      int t) {
  check_t(spec, t, 1);
  check_dim(spec, x0);
  const double cum = spec.schedule.cum_at(t);
  const int d = spec.dim;
  if (spec.kind() == ProcessKind::gaussian) {
    std::vector<double> mean(d), var(d, clamp_var(1.0 - cum));
    const double scale = std::sqrt(cum);
    for (int i = 0; i < d; ++i) mean[i] = scale * x0[i];
    return DiagonalDistribution::gaussian(std::move(mean), std::move(var));
  }
  std::vector<double> rate(d);
  for (int i = 0; i < d; ++i) rate[i] = cum * x0[i] + 0.5 * (1.0 - cum);
  return DiagonalDistribution::bernoulli(std::move(rate));
}

DiagonalDistribution forward_posterior(const DiffusionSpec& spec, const std::vector<double>& x0,
                                       const std::vector<double>& xt, int t) {
  if (t < 2) throw std::invalid_argument("forward_posterior: t must be >= 2 (t = 1 is the edge step)");
  check_t(spec, t, 2);
  check_dim(spec, x0);
  check_dim(spec, xt);
  const double beta = spec.schedule.beta_at(t);
  const double cum_prev = spec.schedule.cum_before(t);
  const double cum = spec.schedule.cum_at(t);
  const int d = spec.dim;

  if (spec.kind() == ProcessKind::gaussian) {
    const double denom = 1.0 - cum;
    const double w_xt = std::sqrt(1.0 - beta) * (1.0 - cum_prev) / denom;
    const double w_x0 = std::sqrt(cum_prev) * beta / denom;
    const double var = clamp_var(beta * (1.0 - cum_prev) / denom);
    std::vector<double> mean(d), v(d, var);
    for (int i = 0; i < d; ++i) mean[i] = w_xt * xt[i] + w_x0 * x0[i];
    return DiagonalDistribution::gaussian(std::move(mean), std::move(v));
  }

  // Per-bit Bayes over x^{t-1} in {0,1}: kernel pmf times marginal rate.
  std::vector<double> rate(d);
  for (int i = 0; i < d; ++i) {
    const double m_prev = cum_prev * x0[i] + 0.5 * (1.0 - cum_prev);
    const double rate_if_one = 1.0 * (1.0 - beta) + 0.5 * beta;
    const double rate_if_zero = 0.5 * beta;
    const double lik_one = xt[i] > 0.5 ? rate_if_one : 1.0 - rate_if_one;
    const double lik_zero = xt[i] > 0.5 ? rate_if_zero : 1.0 - rate_if_zero;
    const double num = lik_one * m_prev;
    const double den = num + lik_zero * (1.0 - m_prev);
    rate[i] = den > 0.0 ? num / den : 0.5;
  }
  return DiagonalDistribution::bernoulli(std::move(rate));
}

double kl_divergence(const DiagonalDistribution& q, const DiagonalDistribution& p) {
  if (q.kind != p.kind) throw std::invalid_argument("kl_divergence: kind mismatch");
  if (q.dim() != p.dim()) throw std::invalid_argument("kl_divergence: dimension mismatch");
  double kl = 0.0;
  if (q.kind == DiagonalDistribution::Kind::gaussian) {
    for (int i = 0; i < q.dim(); ++i) {
      const double vq = clamp_var(q.var[i]);
      const double vp = clamp_var(p.var[i]);
      const double dm = p.mean[i] - q.mean[i];
      kl += 0.5 * (vq / vp + dm * dm / vp - 1.0 + std::log(vp / vq));
    }
  } else {
    for (int i = 0; i < q.dim(); ++i) {
      const double rq = q.rate[i];
      const double rp = clamp_rate(p.rate[i]);
      kl += xlogx(rq) - rq * std::log(rp) + xlogx(1.0 - rq) - (1.0 - rq) * std::log(1.0 - rp);
    }
  }
  return kl;
}

double entropy(const DiagonalDistribution& dist) {
  double h = 0.0;
  if (dist.kind == DiagonalDistribution::Kind::gaussian) {
    for (double v : dist.var) h += 0.5 * std::log(2.0 * M_PI * M_E * clamp_var(v));
  } else {
    for (double r : dist.rate) h += -xlogx(r) - xlogx(1.0 - r);
  }
  return h;
}

double log_density(const DiagonalDistribution& dist, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != dist.dim())
    throw std::invalid_argument("log_density: dimension mismatch");
  double lp = 0.0;
  if (dist.kind == DiagonalDistribution::Kind::gaussian) {
    for (int i = 0; i < dist.dim(); ++i) {
      const double v = clamp_var(dist.var[i]);
      const double dm = x[i] - dist.mean[i];
      lp += -0.5 * (kLog2Pi + std::log(v)) - 0.5 * dm * dm / v;
    }
  } else {
    for (int i = 0; i < dist.dim(); ++i) {
      const double r = clamp_rate(dist.rate[i]);
      lp += x[i] > 0.5 ? std::log(r) : std::log(1.0 - r);
    }
  }
  return lp;
}

std::vector<double> sample(const DiagonalDistribution& dist, Rng& rng) {
  std::vector<double> x(dist.dim());
  if (dist.kind == DiagonalDistribution::Kind::gaussian) {
    for (int i = 0; i < dist.dim(); ++i)
      x[i] = dist.mean[i] + std::sqrt(dist.var[i]) * rng.normal();
  } else {
    for (int i = 0; i < dist.dim(); ++i) x[i] = rng.bernoulli(dist.rate[i]) ? 1.0 : 0.0;
  }
  return x;
}

}  // namespace diffusion
