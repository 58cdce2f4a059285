#include "diffusion/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace diffusion {

namespace {

constexpr double kLn2 = 0.6931471805599453094;

double pooled_variance(const Mat& m) {
  double mean = 0.0;
  for (double v : m.a) mean += v;
  mean /= static_cast<double>(m.a.size());
  double var = 0.0;
  for (double v : m.a) var += (v - mean) * (v - mean);
  return var / static_cast<double>(m.a.size());
}

Mat draw_batch(const Mat& data, int batch, Rng& rng) {
  Mat out(batch, data.cols);
  for (int i = 0; i < batch; ++i) {
    const int row = static_cast<int>(rng.below(data.rows));
    for (int j = 0; j < data.cols; ++j) out(i, j) = data(row, j);
  }
  return out;
}

void write_back(const ParameterVector& combined, DiffusionSpec& spec, ReverseModel& model,
                bool learn_schedule) {
  model.params().copy_matching_from(combined, "");
  if (!learn_schedule) return;
  Schedule& sched = spec.schedule;
  for (int t = 2; t <= sched.steps; ++t)
    sched.u[t - 2] = combined.matrix(schedule_entry_name(t)).a[0];
  sched.refresh_from_u();
}

}  // namespace

void restrict_ts(BoundWorkspace& ws, int k, Rng& rng) {
  const int total = static_cast<int>(ws.ts.size());
  if (k <= 0 || k >= total) return;
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  order.resize(k);
  std::sort(order.begin(), order.end());
  std::vector<int> ts;
  std::vector<Mat> xt;
  for (int idx : order) {
    ts.push_back(ws.ts[idx]);
    if (!ws.chain_mode) xt.push_back(std::move(ws.xt[idx]));
  }
  ws.ts = std::move(ts);
  ws.xt = std::move(xt);
  ws.t_scale = static_cast<double>(total) / k * ws.t_scale;
}

TrainResult train(DiffusionSpec& spec, ReverseModel& model, const Mat& data,
                  const TrainConfig& cfg) {
  require_compatible(spec, model);
  if (data.rows < 1 || data.cols != spec.dim)
    throw std::invalid_argument("train: bad dataset shape");
  if (cfg.batch < 1 || cfg.steps < 0) throw std::invalid_argument("train: bad batch/step counts");
  if (!(cfg.accumulator_decay > 0.0 && cfg.accumulator_decay < 1.0))
    throw std::invalid_argument("train: accumulator decay must lie in (0,1)");
  if (cfg.t_subsample < 0 || cfg.t_subsample > std::max(spec.steps() - 1, 0))
    throw std::invalid_argument("train: bad t_subsample");
  if (cfg.learn_schedule &&
      (spec.kind() != ProcessKind::gaussian || !spec.schedule.learnable()))
    throw std::invalid_argument("train: schedule learning needs a learnable gaussian schedule");
  if (spec.kind() == ProcessKind::gaussian) {
    const double v = pooled_variance(data);
    if (std::fabs(v - 1.0) > 0.05)
      throw std::invalid_argument("train: gaussian training data must be standardized to variance 1");
  }

  const bool gaussian = spec.kind() == ProcessKind::gaussian;
  const bool learn = cfg.learn_schedule;

  ParameterVector combined = model.params();
  if (learn) {
    for (int t = 2; t <= spec.steps(); ++t) {
      combined.add(schedule_entry_name(t), 1, 1);
      combined.data(schedule_entry_name(t))[0] = spec.schedule.u[t - 2];
    }
  }

  Rng batch_rng = Rng(cfg.seed).split(101);
  Rng noise_rng = Rng(cfg.seed).split(202);
  Rng eval_rng = Rng(cfg.seed).split(303);

  std::vector<double> acc(combined.size(), 0.0);
  ParameterVector last_good = combined;

  TrainResult result;
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  auto log_eval = [&](long step, double grad_norm) {
    write_back(combined, spec, model, learn);
    Mat eval_batch = draw_batch(data, std::min(cfg.eval_batch, data.rows), eval_rng);
    BoundBreakdown bb =
        bound_terms(spec, model, eval_batch, eval_rng, cfg.t_subsample);
    result.log.push_back({step, elapsed(), bb.total_bits, grad_norm});
    if (cfg.on_log) cfg.on_log(result.log.back());
  };

  for (long step = 1; step <= cfg.steps; ++step) {
    Mat x0 = draw_batch(data, cfg.batch, batch_rng);
    BoundWorkspace ws;
    if (gaussian) {
      FrozenNoise noise = draw_frozen_noise(spec.steps(), cfg.batch, spec.dim, noise_rng);
      ws = make_chain_workspace(spec, std::move(x0), std::move(noise));
      restrict_ts(ws, cfg.t_subsample, noise_rng);
    } else {
      ws = make_marginal_workspace(spec, std::move(x0), noise_rng, cfg.t_subsample);
    }

    Evaluation ev;
    try {
      ev = evaluate_with_gradients(combined, [&](Tape& tape, ParamBinder& binder) {
        return build_bound_graph(tape, binder, spec, model, ws, learn);
      });
    } catch (const std::runtime_error&) {
      combined = last_good;
      write_back(combined, spec, model, learn);
      result.aborted = true;
      result.steps_done = step - 1;
      return result;
    }

    double gnorm2 = 0.0;
    for (double g : ev.gradient) gnorm2 += g * g;
    if (!std::isfinite(gnorm2)) {
      combined = last_good;
      write_back(combined, spec, model, learn);
      result.aborted = true;
      result.steps_done = step - 1;
      return result;
    }

    double lr = cfg.lr;
    if (cfg.lr_final > 0.0 && cfg.steps > 1)
      lr = cfg.lr * std::pow(cfg.lr_final / cfg.lr,
                             static_cast<double>(step - 1) / (cfg.steps - 1));

    const double decay = cfg.accumulator_decay;
    for (std::size_t i = 0; i < combined.size(); ++i) {
      const double g = ev.gradient[i];
      acc[i] = decay * acc[i] + (1.0 - decay) * g * g;
      combined.values()[i] += lr * g / (std::sqrt(acc[i]) + 1e-8);
    }

    if (cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.steps)) {
      log_eval(step, std::sqrt(gnorm2));
      last_good = combined;
    }
    result.steps_done = step;
  }

  write_back(combined, spec, model, learn);
  if (cfg.steps == 0 && cfg.eval_every > 0) log_eval(0, 0.0);
  return result;
}

}  // namespace diffusion
