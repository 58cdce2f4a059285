#include "diffusion/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace diffusion {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("logit: argument outside (0,1)");
  return std::log(p) - std::log1p(-p);
}

namespace {

void refresh_cum(Schedule& s) {
  s.cum.resize(s.beta.size());
  double acc = 1.0;
  for (std::size_t i = 0; i < s.beta.size(); ++i) {
    acc *= 1.0 - s.beta[i];
    s.cum[i] = acc;
  }
}

}  // namespace

void Schedule::refresh_from_u() {
  if (mode != ScheduleMode::learnable) return;
  beta[0] = beta1;
  for (int t = 2; t <= steps; ++t) beta[t - 1] = logistic(u[t - 2]);
  refresh_cum(*this);
}

Schedule make_schedule(ProcessKind kind, int steps, double beta1, ScheduleMode mode) {
  if (steps < 1) throw std::invalid_argument("make_schedule: step count must be >= 1");
  if (!(beta1 > 0.0 && beta1 < 1.0))
    throw std::invalid_argument("make_schedule: beta1 outside (0,1)");
  if (mode == ScheduleMode::learnable && kind == ProcessKind::binomial)
    throw std::invalid_argument("make_schedule: learnable schedule requires gaussian diffusion");

  Schedule s;
  s.kind = kind;
  s.steps = steps;
  s.mode = mode;
  s.beta.resize(steps);

  if (mode == ScheduleMode::fixed_rule) {
    s.beta1 = 1.0 / steps;
    for (int t = 1; t <= steps; ++t) s.beta[t - 1] = 1.0 / (steps - t + 1);
    refresh_cum(s);
  } else {
    s.beta1 = beta1;
    s.u.resize(steps - 1);
    // Start at the fixed rule; the final rate 1 is capped so logit is finite.
    constexpr double kInitCap = 1.0 - 1e-3;
    for (int t = 2; t <= steps; ++t) {
      const double target = std::min(1.0 / (steps - t + 1), kInitCap);
      s.u[t - 2] = logit(target);
    }
    s.refresh_from_u();
  }
  return s;
}

Schedule schedule_from_rates(ProcessKind kind, const std::vector<double>& rates) {
  if (rates.empty()) throw std::invalid_argument("schedule_from_rates: no rates");
  for (double b : rates)
    if (!(b > 0.0 && b <= 1.0))
      throw std::invalid_argument("schedule_from_rates: rates must lie in (0, 1]");
  Schedule s;
  s.kind = kind;
  s.steps = static_cast<int>(rates.size());
  s.mode = ScheduleMode::fixed_rule;
  s.beta1 = rates[0];
  s.beta = rates;
  refresh_cum(s);
  return s;
}

DiagonalDistribution DiffusionSpec::equilibrium() const {
  const int d = dim;
  if (kind() == ProcessKind::gaussian) {
    return DiagonalDistribution::gaussian(std::vector<double>(d, 0.0),
                                          std::vector<double>(d, 1.0));
  }
  return DiagonalDistribution::bernoulli(std::vector<double>(d, 0.5));
}

}  // namespace diffusion
