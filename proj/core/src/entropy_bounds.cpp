#include "diffusion/entropy_bounds.hpp"

#include <cmath>
#include <stdexcept>

#include "diffusion/kernels.hpp"

namespace diffusion {

namespace {

constexpr double kLog2PiE = 2.8378770664093454836;  // ln(2*pi*e)

double bern_entropy(double r) {
  auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  return -xlogx(r) - xlogx(1.0 - r);
}

}  // namespace

EntropyBoundReport entropy_bounds(const DiffusionSpec& spec, int t, const Mat& x0_batch) {
  if (t < 2 || t > spec.steps())
    throw std::invalid_argument("entropy_bounds: t must lie in [2, T]");
  if (x0_batch.cols != spec.dim || x0_batch.rows < 1)
    throw std::invalid_argument("entropy_bounds: bad batch shape");

  const int d = spec.dim;
  const double beta = spec.schedule.beta_at(t);
  const double cum_prev = spec.schedule.cum_before(t);
  const double cum = spec.schedule.cum_at(t);

  EntropyBoundReport rep;
  rep.t = t;

  if (spec.kind() == ProcessKind::gaussian) {
    double mean = 0.0;
    for (double v : x0_batch.a) mean += v;
    mean /= static_cast<double>(x0_batch.a.size());
    double var = 0.0;
    for (double v : x0_batch.a) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x0_batch.a.size());
    if (std::fabs(var - 1.0) > 0.05)
      throw std::invalid_argument(
          "entropy_bounds: gaussian data must be scaled to variance 1");

    rep.upper_nats = 0.5 * d * (kLog2PiE + std::log(clamp_var(beta)));
    const double h_prev = 0.5 * d * (kLog2PiE + std::log(clamp_var(1.0 - cum_prev)));
    const double h_cur = 0.5 * d * (kLog2PiE + std::log(clamp_var(1.0 - cum)));
    rep.lower_nats = rep.upper_nats + h_prev - h_cur;
    return rep;
  }

  // The step-kernel rate is beta/2 or 1 - beta/2 depending on the previous
  // bit; both have the same entropy, so the upper bound is state-free.
  rep.upper_nats = d * bern_entropy(0.5 * beta);
  double h_prev = 0.0, h_cur = 0.0;
  for (double x : x0_batch.a) {
    h_prev += bern_entropy(cum_prev * x + 0.5 * (1.0 - cum_prev));
    h_cur += bern_entropy(cum * x + 0.5 * (1.0 - cum));
  }
  const double inv_n = 1.0 / x0_batch.rows;
  rep.lower_nats = rep.upper_nats + (h_prev - h_cur) * inv_n;
  return rep;
}

}  // namespace diffusion
