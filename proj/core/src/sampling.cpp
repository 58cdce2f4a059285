#include "diffusion/sampling.hpp"

#include <cmath>
#include <stdexcept>

namespace diffusion {

namespace {

// Sample row i of the kernel with moments (mean_or_rate, var) into X.
void sample_rows(const DiffusionSpec& spec, const Mat& mean_or_rate, const Mat* var, Mat& X,
                 std::vector<Rng>& streams) {
  for (int i = 0; i < X.rows; ++i) {
    Rng& r = streams[i];
    for (int j = 0; j < X.cols; ++j) {
      if (spec.kind() == ProcessKind::gaussian)
        X(i, j) = mean_or_rate(i, j) + std::sqrt((*var)(i, j)) * r.normal();
      else
        X(i, j) = r.bernoulli(mean_or_rate(i, j)) ? 1.0 : 0.0;
    }
  }
}

}  // namespace

Mat sample_reverse(const DiffusionSpec& spec, const ReverseModel& model, int n, Rng& rng,
                   const FrameSink& frames) {
  require_compatible(spec, model);
  if (n < 1) throw std::invalid_argument("sample_reverse: n must be >= 1");
  const int d = spec.dim;
  const int T = spec.steps();

  std::vector<Rng> streams;
  streams.reserve(n);
  for (int i = 0; i < n; ++i) streams.push_back(rng.split(static_cast<std::uint64_t>(i)));

  Mat X(n, d);
  const DiagonalDistribution pi = spec.equilibrium();
  for (int i = 0; i < n; ++i) X.set_row(i, sample(pi, streams[i]));
  if (frames) frames(T, X);

  Mat mean_or_rate, var;
  for (int t = T; t >= 2; --t) {
    const double beta = spec.schedule.beta_at(t);
    if (spec.kind() == ProcessKind::gaussian) {
      model.apply_batch(X, t, beta, mean_or_rate, &var);
      sample_rows(spec, mean_or_rate, &var, X, streams);
    } else {
      model.apply_batch(X, t, beta, mean_or_rate, nullptr);
      sample_rows(spec, mean_or_rate, nullptr, X, streams);
    }
    if (frames) frames(t - 1, X);
  }

  // Fixed edge step to x^0.
  for (int i = 0; i < n; ++i) {
    const DiagonalDistribution k = edge_reverse_kernel(spec, X.row_vector(i));
    X.set_row(i, sample(k, streams[i]));
  }
  if (frames) frames(0, X);
  return X;
}

TrajectoryRecord record_reverse_trajectory(const DiffusionSpec& spec, const ReverseModel& model,
                                           Rng& rng) {
  require_compatible(spec, model);
  const int T = spec.steps();
  TrajectoryRecord rec;
  rec.seed = rng.base_seed();
  rec.states.resize(T + 1);
  rec.log_p.resize(T);

  rec.states[T] = sample(spec.equilibrium(), rng);
  for (int t = T; t >= 2; --t) {
    const DiagonalDistribution k = reverse_apply(spec, model, rec.states[t], t);
    rec.states[t - 1] = sample(k, rng);
    rec.log_p[t - 1] = log_density(k, rec.states[t - 1]);
  }
  const DiagonalDistribution edge = edge_reverse_kernel(spec, rec.states[1]);
  rec.states[0] = sample(edge, rng);
  rec.log_p[0] = log_density(edge, rec.states[0]);
  return rec;
}

}  // namespace diffusion
