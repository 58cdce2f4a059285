#pragma once

#include <functional>
#include <vector>

#include "diffusion/bound.hpp"
#include "diffusion/models.hpp"

namespace diffusion {

/// Called once per time index during reverse sampling, from t = T down to 0,
/// with the current batch of chain states.
using FrameSink = std::function<void(int t, const Mat& states)>;

/// Draw n samples from the generative chain: x^T from the equilibrium
/// distribution, model kernels for t = T..2, the fixed edge kernel for the
/// final step. Each chain owns an rng stream split from `rng`, so results
/// are independent of batch layout.
Mat sample_reverse(const DiffusionSpec& spec, const ReverseModel& model, int n, Rng& rng,
                   const FrameSink& frames = nullptr);

/// One trajectory with per-step log densities, for diagnostics and tests.
struct TrajectoryRecord {
  std::vector<std::vector<double>> states;  // index t = 0..T
  std::vector<double> log_p;                // log p(x^{t-1} | x^t), index t-1, t = 1..T
  std::vector<double> log_q;                // log q(x^t | x^{t-1}), forward records only
  std::uint64_t seed = 0;
};

TrajectoryRecord record_reverse_trajectory(const DiffusionSpec& spec, const ReverseModel& model,
                                           Rng& rng);

}  // namespace diffusion
