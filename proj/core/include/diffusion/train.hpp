#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "diffusion/bound.hpp"
#include "diffusion/models.hpp"

namespace diffusion {

struct TrainLogRow {
  long step = 0;
  double wall_seconds = 0.0;
  double bound_bits = 0.0;
  double grad_norm = 0.0;
};

struct TrainConfig {
  int batch = 64;
  long steps = 1000;
  double lr = 1e-3;
  double lr_final = 0.0;  // 0 keeps lr constant, otherwise geometric decay to lr_final
  double accumulator_decay = 0.95;
  std::uint64_t seed = 1;
  int t_subsample = 0;  // 0 = full time sum
  bool learn_schedule = false;
  long eval_every = 100;
  int eval_batch = 256;
  std::function<void(const TrainLogRow&)> on_log;  // optional live sink
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  bool aborted = false;  // bound went non-finite; parameters restored to last good state
  long steps_done = 0;
};

/// Gradient ascent on the variational lower bound with per-parameter step
/// scaling from an exponentially decayed squared-gradient accumulator.
/// Mutates the model parameters and, when learn_schedule is set, the
/// schedule inside `spec`. Deterministic given the config seed.
TrainResult train(DiffusionSpec& spec, ReverseModel& model, const Mat& data,
                  const TrainConfig& cfg);

/// Restrict the evaluated time subset of a workspace to k distinct indices
/// (unbiased rescale); k = 0 leaves the workspace untouched.
void restrict_ts(BoundWorkspace& ws, int k, Rng& rng);

}  // namespace diffusion
