#include "diffusion/bound.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace diffusion {

namespace {

constexpr double kLog2PiE = 2.8378770664093454836;  // ln(2*pi*e)
constexpr double kLn2 = 0.6931471805599453094;

double bern_entropy(double r) {
  auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  return -xlogx(r) - xlogx(1.0 - r);
}

struct GaussPosterior {
  Mat mean;     // [n, d]
  double var;   // shared across batch and dims at a given t
};

GaussPosterior gaussian_posterior_batch(const DiffusionSpec& spec, const Mat& x0, const Mat& xt,
                                        int t) {
  const double beta = spec.schedule.beta_at(t);
  const double cum_prev = spec.schedule.cum_before(t);
  const double cum = spec.schedule.cum_at(t);
  const double denom = 1.0 - cum;
  const double w_xt = std::sqrt(1.0 - beta) * (1.0 - cum_prev) / denom;
  const double w_x0 = std::sqrt(cum_prev) * beta / denom;
  GaussPosterior p;
  p.var = clamp_var(beta * (1.0 - cum_prev) / denom);
  p.mean = Mat(x0.rows, x0.cols);
  for (std::size_t i = 0; i < p.mean.a.size(); ++i)
    p.mean.a[i] = w_xt * xt.a[i] + w_x0 * x0.a[i];
  return p;
}

Mat binomial_posterior_batch(const DiffusionSpec& spec, const Mat& x0, const Mat& xt, int t) {
  const double beta = spec.schedule.beta_at(t);
  const double cum_prev = spec.schedule.cum_before(t);
  const double rate_if_one = (1.0 - beta) + 0.5 * beta;
  const double rate_if_zero = 0.5 * beta;
  Mat q(x0.rows, x0.cols);
  for (std::size_t i = 0; i < q.a.size(); ++i) {
    const double m_prev = cum_prev * x0.a[i] + 0.5 * (1.0 - cum_prev);
    const double lik_one = xt.a[i] > 0.5 ? rate_if_one : 1.0 - rate_if_one;
    const double lik_zero = xt.a[i] > 0.5 ? rate_if_zero : 1.0 - rate_if_zero;
    const double num = lik_one * m_prev;
    q.a[i] = num / (num + lik_zero * (1.0 - m_prev));
  }
  return q;
}

// Tape-side schedule values; constants unless the schedule is being learned.
struct SchedNodes {
  std::vector<Var> beta;  // index t-1
  std::vector<Var> cum;
};

SchedNodes build_sched_nodes(Tape& tape, ParamBinder& binder, const Schedule& sched,
                             bool learn_schedule) {
  SchedNodes n;
  n.beta.resize(sched.steps);
  n.cum.resize(sched.steps);
  if (!learn_schedule) {
    for (int t = 1; t <= sched.steps; ++t) {
      n.beta[t - 1] = tape.constant_scalar(sched.beta_at(t));
      n.cum[t - 1] = tape.constant_scalar(sched.cum_at(t));
    }
    return n;
  }
  n.beta[0] = tape.constant_scalar(sched.beta1);
  n.cum[0] = tape.constant_scalar(1.0 - sched.beta1);
  for (int t = 2; t <= sched.steps; ++t) {
    n.beta[t - 1] = tape.sigmoid(binder(schedule_entry_name(t)));
    Var keep = tape.offset(tape.neg(n.beta[t - 1]), 1.0);
    n.cum[t - 1] = tape.mul(n.cum[t - 2], keep);
  }
  return n;
}

}  // namespace

std::string schedule_entry_name(int t) { return "sched.u." + std::to_string(t); }

FrozenNoise draw_frozen_noise(int steps, int n, int dim, Rng& rng) {
  FrozenNoise fn;
  fn.eps.resize(steps);
  for (int t = 0; t < steps; ++t) {
    fn.eps[t] = Mat(n, dim);
    for (double& v : fn.eps[t].a) v = rng.normal();
  }
  return fn;
}

std::vector<Mat> frozen_noise_trajectory(const DiffusionSpec& spec, const Mat& x0,
                                         const FrozenNoise& noise) {
  if (spec.kind() != ProcessKind::gaussian)
    throw std::invalid_argument("frozen_noise_trajectory: gaussian diffusion required");
  if (static_cast<int>(noise.eps.size()) != spec.steps())
    throw std::invalid_argument("frozen_noise_trajectory: noise length mismatch");
  std::vector<Mat> traj(spec.steps() + 1);
  traj[0] = x0;
  for (int t = 1; t <= spec.steps(); ++t) {
    const double beta = spec.schedule.beta_at(t);
    const double keep = std::sqrt(1.0 - beta);
    const double amp = std::sqrt(beta);
    const Mat& prev = traj[t - 1];
    const Mat& eps = noise.eps[t - 1];
    if (!prev.same_shape(eps))
      throw std::invalid_argument("frozen_noise_trajectory: noise shape mismatch");
    Mat next(prev.rows, prev.cols);
    for (std::size_t i = 0; i < next.a.size(); ++i)
      next.a[i] = keep * prev.a[i] + amp * eps.a[i];
    traj[t] = std::move(next);
  }
  return traj;
}

std::vector<std::vector<double>> frozen_noise_trajectory(const DiffusionSpec& spec,
                                                         const std::vector<double>& x0,
                                                         const FrozenNoise& noise) {
  Mat m(1, static_cast<int>(x0.size()), std::vector<double>(x0));
  std::vector<Mat> traj = frozen_noise_trajectory(spec, m, noise);
  std::vector<std::vector<double>> out(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) out[t] = traj[t].a;
  return out;
}

DiagonalDistribution edge_reverse_kernel(const DiffusionSpec& spec,
                                         const std::vector<double>& x1) {
  if (static_cast<int>(x1.size()) != spec.dim)
    throw std::invalid_argument("edge_reverse_kernel: dimension mismatch");
  const double beta1 = spec.schedule.beta_at(1);
  const int d = spec.dim;
  if (spec.kind() == ProcessKind::gaussian) {
    std::vector<double> mean(d), var(d, clamp_var(beta1));
    const double keep = std::sqrt(1.0 - beta1);
    for (int i = 0; i < d; ++i) mean[i] = keep * x1[i];
    return DiagonalDistribution::gaussian(std::move(mean), std::move(var));
  }
  std::vector<double> rate(d);
  for (int i = 0; i < d; ++i) rate[i] = x1[i] * (1.0 - beta1) + 0.5 * beta1;
  return DiagonalDistribution::bernoulli(std::move(rate));
}

BoundWorkspace make_chain_workspace(const DiffusionSpec& spec, Mat x0, FrozenNoise noise) {
  if (spec.kind() != ProcessKind::gaussian)
    throw std::invalid_argument("make_chain_workspace: gaussian diffusion required");
  BoundWorkspace ws;
  ws.x0 = std::move(x0);
  ws.chain_mode = true;
  ws.noise = std::move(noise);
  for (int t = 2; t <= spec.steps(); ++t) ws.ts.push_back(t);
  ws.t_scale = 1.0;
  return ws;
}

BoundWorkspace make_marginal_workspace(const DiffusionSpec& spec, Mat x0, Rng& rng,
                                       int t_subsample) {
  const int T = spec.steps();
  BoundWorkspace ws;
  ws.chain_mode = false;

  if (t_subsample < 0 || t_subsample > std::max(T - 1, 0))
    throw std::invalid_argument("make_marginal_workspace: bad t_subsample");
  if (t_subsample == 0 || t_subsample == T - 1) {
    for (int t = 2; t <= T; ++t) ws.ts.push_back(t);
    ws.t_scale = 1.0;
  } else {
    // Partial Fisher-Yates over {2..T}: k distinct draws, unbiased rescale.
    std::vector<int> pool(T - 1);
    std::iota(pool.begin(), pool.end(), 2);
    for (int i = 0; i < t_subsample; ++i) {
      const int j = i + static_cast<int>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    ws.ts.assign(pool.begin(), pool.begin() + t_subsample);
    std::sort(ws.ts.begin(), ws.ts.end());
    ws.t_scale = static_cast<double>(T - 1) / t_subsample;
  }

  const int n = x0.rows;
  const int d = x0.cols;
  ws.xt.reserve(ws.ts.size());
  for (int t : ws.ts) {
    const double cum = spec.schedule.cum_at(t);
    Mat xt(n, d);
    if (spec.kind() == ProcessKind::gaussian) {
      const double scale = std::sqrt(cum);
      const double amp = std::sqrt(1.0 - cum);
      for (std::size_t i = 0; i < xt.a.size(); ++i)
        xt.a[i] = scale * x0.a[i] + amp * rng.normal();
    } else {
      for (std::size_t i = 0; i < xt.a.size(); ++i) {
        const double m = cum * x0.a[i] + 0.5 * (1.0 - cum);
        xt.a[i] = rng.bernoulli(m) ? 1.0 : 0.0;
      }
    }
    ws.xt.push_back(std::move(xt));
  }
  ws.x0 = std::move(x0);
  return ws;
}

BoundBreakdown eval_bound(const DiffusionSpec& spec, const ReverseModel& model,
                          const BoundWorkspace& ws) {
  require_compatible(spec, model);
  const int n = ws.x0.rows;
  const int d = ws.x0.cols;
  const int T = spec.steps();
  const bool gaussian = spec.kind() == ProcessKind::gaussian;

  std::vector<Mat> traj;
  if (ws.chain_mode) traj = frozen_noise_trajectory(spec, ws.x0, ws.noise);

  BoundBreakdown out;
  out.ts = ws.ts;
  out.subsampled = ws.t_scale != 1.0;
  out.kl_nats.resize(ws.ts.size(), 0.0);

  std::vector<double> kl_per_datum(n, 0.0);
  Mat mp, vp;

  for (std::size_t k = 0; k < ws.ts.size(); ++k) {
    const int t = ws.ts[k];
    const Mat& xt = ws.chain_mode ? traj[t] : ws.xt[k];
    const double beta = spec.schedule.beta_at(t);
    double batch_kl = 0.0;
    if (gaussian) {
      const GaussPosterior post = gaussian_posterior_batch(spec, ws.x0, xt, t);
      model.apply_batch(xt, t, beta, mp, &vp);
      const double ln_vq = std::log(post.var);
      for (int i = 0; i < n; ++i) {
        double kl = 0.0;
        for (int j = 0; j < d; ++j) {
          const double vpij = clamp_var(vp(i, j));
          const double dm = mp(i, j) - post.mean(i, j);
          kl += 0.5 * (post.var / vpij + dm * dm / vpij - 1.0 + std::log(vpij) - ln_vq);
        }
        kl_per_datum[i] += kl;
        batch_kl += kl;
      }
    } else {
      const Mat q = binomial_posterior_batch(spec, ws.x0, xt, t);
      model.apply_batch(xt, t, beta, mp, nullptr);
      for (int i = 0; i < n; ++i) {
        double kl = 0.0;
        for (int j = 0; j < d; ++j) {
          const double qq = q(i, j);
          const double pp = clamp_rate(mp(i, j));
          kl += -bern_entropy(qq) - qq * std::log(pp) - (1.0 - qq) * std::log(1.0 - pp);
        }
        kl_per_datum[i] += kl;
        batch_kl += kl;
      }
    }
    if (!std::isfinite(batch_kl))
      throw std::runtime_error("non-finite bound term at t=" + std::to_string(t));
    out.kl_nats[k] = batch_kl / n;
    out.kl_sum_nats += ws.t_scale * out.kl_nats[k];
  }

  // Entropy terms from the closed-form marginals.
  std::vector<double> h_end(n), h_first(n);
  double h_pi;
  if (gaussian) {
    const double he = 0.5 * d * (kLog2PiE + std::log(clamp_var(1.0 - spec.schedule.cum_at(T))));
    const double hf = 0.5 * d * (kLog2PiE + std::log(clamp_var(spec.schedule.beta_at(1))));
    std::fill(h_end.begin(), h_end.end(), he);
    std::fill(h_first.begin(), h_first.end(), hf);
    h_pi = 0.5 * d * kLog2PiE;
  } else {
    const double cum_T = spec.schedule.cum_at(T);
    const double cum_1 = spec.schedule.cum_at(1);
    for (int i = 0; i < n; ++i) {
      double he = 0.0, hf = 0.0;
      for (int j = 0; j < d; ++j) {
        he += bern_entropy(cum_T * ws.x0(i, j) + 0.5 * (1.0 - cum_T));
        hf += bern_entropy(cum_1 * ws.x0(i, j) + 0.5 * (1.0 - cum_1));
      }
      h_end[i] = he;
      h_first[i] = hf;
    }
    h_pi = d * kLn2;
  }

  double mean_k = 0.0, mean_he = 0.0, mean_hf = 0.0;
  std::vector<double> k_per_datum(n);
  for (int i = 0; i < n; ++i) {
    k_per_datum[i] = -ws.t_scale * kl_per_datum[i] + h_end[i] - h_first[i] - h_pi;
    mean_k += k_per_datum[i];
    mean_he += h_end[i];
    mean_hf += h_first[i];
  }
  mean_k /= n;
  mean_he /= n;
  mean_hf /= n;

  double var_k = 0.0;
  for (int i = 0; i < n; ++i) var_k += (k_per_datum[i] - mean_k) * (k_per_datum[i] - mean_k);
  out.stderr_nats = n > 1 ? std::sqrt(var_k / (n - 1.0) / n) : 0.0;

  out.h_end_nats = mean_he;
  out.h_first_nats = mean_hf;
  out.h_equilibrium_nats = h_pi;
  out.total_nats = mean_k;
  out.total_bits = mean_k / kLn2;
  return out;
}

BoundBreakdown bound_terms(const DiffusionSpec& spec, const ReverseModel& model, const Mat& x0,
                           Rng& rng, int t_subsample) {
  return eval_bound(spec, model, make_marginal_workspace(spec, x0, rng, t_subsample));
}

Var build_bound_graph(Tape& tape, ParamBinder& binder, const DiffusionSpec& spec,
                      const ReverseModel& model, const BoundWorkspace& ws, bool learn_schedule) {
  require_compatible(spec, model);
  if (learn_schedule && !ws.chain_mode)
    throw std::invalid_argument("schedule learning requires a chain-mode workspace");
  if (learn_schedule && spec.kind() != ProcessKind::gaussian)
    throw std::invalid_argument("schedule learning requires gaussian diffusion");

  const int n = ws.x0.rows;
  const int d = ws.x0.cols;
  const int T = spec.steps();
  const bool gaussian = spec.kind() == ProcessKind::gaussian;
  const SchedNodes sched = build_sched_nodes(tape, binder, spec.schedule, learn_schedule);

  // States x^t: a differentiable chain from frozen noise, or fixed draws.
  std::vector<Var> states(T + 1);
  if (ws.chain_mode) {
    states[0] = tape.constant(ws.x0);
    for (int t = 1; t <= T; ++t) {
      TapeContext ctx(tape, "trajectory t=" + std::to_string(t));
      Var keep = tape.sqrt(tape.offset(tape.neg(sched.beta[t - 1]), 1.0));
      Var amp = tape.sqrt(sched.beta[t - 1]);
      states[t] = tape.add(tape.mul_bscalar(states[t - 1], keep),
                           tape.mul_bscalar(tape.constant(ws.noise.eps[t - 1]), amp));
    }
  }

  Var x0c;
  if (gaussian) x0c = ws.chain_mode ? states[0] : tape.constant(ws.x0);

  Var kl_total;  // sum over batch and evaluated t's, nats
  for (std::size_t k = 0; k < ws.ts.size(); ++k) {
    const int t = ws.ts[k];
    TapeContext ctx(tape, "bound term t=" + std::to_string(t));
    Var xt = ws.chain_mode ? states[t] : tape.constant(ws.xt[k]);
    Var kl_t;
    if (gaussian) {
      // Posterior moments q(x^{t-1} | x^t, x^0).
      Var beta = sched.beta[t - 1];
      Var cum = sched.cum[t - 1];
      Var cum_prev = sched.cum[t - 2];
      Var one_m_cum = tape.offset(tape.neg(cum), 1.0);
      Var one_m_cumprev = tape.offset(tape.neg(cum_prev), 1.0);
      Var inv_denom = tape.recip(one_m_cum);
      Var w_xt = tape.mul(tape.mul(tape.sqrt(tape.offset(tape.neg(beta), 1.0)), one_m_cumprev), inv_denom);
      Var w_x0 = tape.mul(tape.mul(tape.sqrt(cum_prev), beta), inv_denom);
      Var mq = tape.add(tape.mul_bscalar(xt, w_xt), tape.mul_bscalar(x0c, w_x0));
      Var vq = tape.clamp(tape.mul(tape.mul(beta, one_m_cumprev), inv_denom), kVarFloor, 1e300);

      ReverseGraphOutput p = model.graph_apply(tape, binder, xt, t, beta);
      Var inv_vp = tape.recip(p.var);
      Var diff = tape.sub(p.mean_or_rate, mq);
      Var quad = tape.mul(tape.mul(diff, diff), inv_vp);
      Var ratio = tape.mul_bscalar(inv_vp, vq);
      Var logs = tape.add_bscalar(tape.log(p.var), tape.neg(tape.log(vq)));
      kl_t = tape.scale(tape.sum_all(tape.add(tape.add(ratio, quad), tape.offset(logs, -1.0))), 0.5);
    } else {
      const Mat q = binomial_posterior_batch(spec, ws.x0, ws.xt[k], t);
      double neg_h_q = 0.0;
      Mat one_m_q(q.rows, q.cols);
      for (std::size_t i = 0; i < q.a.size(); ++i) {
        neg_h_q -= bern_entropy(q.a[i]);
        one_m_q.a[i] = 1.0 - q.a[i];
      }
      ReverseGraphOutput p = model.graph_apply(tape, binder, xt, t, sched.beta[t - 1]);
      Var rate = p.mean_or_rate;
      Var ce = tape.add(tape.mul(tape.constant(q), tape.log(rate)),
                        tape.mul(tape.constant(std::move(one_m_q)),
                                 tape.log(tape.offset(tape.neg(rate), 1.0))));
      kl_t = tape.add_bscalar(tape.neg(tape.sum_all(ce)), tape.constant_scalar(neg_h_q));
    }
    kl_total = kl_total.valid() ? tape.add(kl_total, kl_t) : kl_t;
  }

  // Entropy terms (batch means, nats).
  Var entropy_terms;
  if (gaussian) {
    Var one_m_cum_T = tape.offset(tape.neg(sched.cum[T - 1]), 1.0);
    Var h_end = tape.scale(tape.offset(tape.log(tape.clamp(one_m_cum_T, kVarFloor, 1e300)), kLog2PiE),
                           0.5 * d);
    const double h_first = 0.5 * d * (kLog2PiE + std::log(clamp_var(spec.schedule.beta_at(1))));
    const double h_pi = 0.5 * d * kLog2PiE;
    entropy_terms = tape.offset(h_end, -h_first - h_pi);
  } else {
    const double cum_T = spec.schedule.cum_at(T);
    const double cum_1 = spec.schedule.cum_at(1);
    double acc = 0.0;
    for (std::size_t i = 0; i < ws.x0.a.size(); ++i) {
      acc += bern_entropy(cum_T * ws.x0.a[i] + 0.5 * (1.0 - cum_T));
      acc -= bern_entropy(cum_1 * ws.x0.a[i] + 0.5 * (1.0 - cum_1));
    }
    entropy_terms = tape.constant_scalar(acc / n - d * kLn2);
  }

  if (!kl_total.valid()) return entropy_terms;  // T == 1: no interior terms
  Var kl_mean = tape.scale(kl_total, -ws.t_scale / n);
  return tape.add(kl_mean, entropy_terms);
}

double null_baseline_bits(const DiffusionSpec& spec, const Mat& data) {
  if (data.cols != spec.dim) throw std::invalid_argument("null_baseline: dimension mismatch");
  const DiagonalDistribution pi = spec.equilibrium();
  double acc = 0.0;
  for (int i = 0; i < data.rows; ++i) acc += log_density(pi, data.row_vector(i));
  return acc / data.rows / kLn2;
}

}  // namespace diffusion
