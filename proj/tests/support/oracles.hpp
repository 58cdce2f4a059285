#pragma once

// Independent reference computations for tests. Everything here recomputes
// expected values from first principles (grids, enumeration, quadrature,
// Monte Carlo) without touching the closed forms under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "diffusion/mat.hpp"
#include "diffusion/rng.hpp"

namespace oracles {

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;
};

inline double gauss_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * M_PI * var);
}

/// Moments of the normalized product of two 1-D Gaussian factors on a dense
/// grid: f(z) = N(xt; sqrt(1-beta) z, beta) * N(z; m0, v0).
inline MeanVar grid_bayes_posterior(double xt, double beta, double m0, double v0,
                                    double lo = -6.0, double hi = 6.0, double step = 1e-3) {
  double z0 = 0.0, z1 = 0.0, z2 = 0.0;
  for (double z = lo; z <= hi; z += step) {
    const double w = gauss_pdf(xt, std::sqrt(1.0 - beta) * z, beta) * gauss_pdf(z, m0, v0);
    z0 += w;
    z1 += w * z;
    z2 += w * z * z;
  }
  MeanVar mv;
  mv.mean = z1 / z0;
  mv.var = z2 / z0 - mv.mean * mv.mean;
  return mv;
}

/// KL(N(mq, vq) || N(mp, vp)) by quadrature on a dense grid.
inline double grid_gaussian_kl(double mq, double vq, double mp, double vp) {
  const double lo = mq - 12.0 * std::sqrt(vq);
  const double hi = mq + 12.0 * std::sqrt(vq);
  const double step = (hi - lo) / 4.0e5;
  double acc = 0.0;
  for (double x = lo; x <= hi; x += step) {
    const double q = gauss_pdf(x, mq, vq);
    if (q < 1e-300) continue;
    acc += q * (std::log(q) - std::log(gauss_pdf(x, mp, vp))) * step;
  }
  return acc;
}

/// Bit-chain pmf helpers for exhaustive enumeration (d = 1).
inline double bit_kernel_pmf(int next, int prev, double beta) {
  const double rate = prev * (1.0 - beta) + 0.5 * beta;
  return next ? rate : 1.0 - rate;
}

/// q(x^t = 1 | x^0) by summing over every chain prefix of length t.
inline double enum_bit_marginal(const std::vector<double>& beta, int x0, int t) {
  double prob_one = 0.0;
  const int chains = 1 << t;
  for (int mask = 0; mask < chains; ++mask) {
    double p = 1.0;
    int prev = x0;
    int last = 0;
    for (int s = 1; s <= t; ++s) {
      const int cur = (mask >> (s - 1)) & 1;
      p *= bit_kernel_pmf(cur, prev, beta[s - 1]);
      prev = cur;
      last = cur;
    }
    if (last == 1) prob_one += p;
  }
  return prob_one;
}

/// q(x^{t-1} = 1 | x^t, x^0) by brute force over the joint of the prefix.
inline double enum_bit_posterior(const std::vector<double>& beta, int x0, int xt, int t) {
  double joint[2] = {0.0, 0.0};  // indexed by x^{t-1}
  const int chains = 1 << t;
  for (int mask = 0; mask < chains; ++mask) {
    double p = 1.0;
    int prev = x0;
    std::vector<int> states(t);
    for (int s = 1; s <= t; ++s) {
      const int cur = (mask >> (s - 1)) & 1;
      p *= bit_kernel_pmf(cur, prev, beta[s - 1]);
      states[s - 1] = cur;
      prev = cur;
    }
    if (states[t - 1] == xt) joint[states[t - 2]] += p;
  }
  return joint[1] / (joint[0] + joint[1]);
}

/// Exact model likelihood p(x^0) for a 1-bit chain by summing over all
/// reverse trajectories; `reverse_rate(t, xt)` gives p(x^{t-1}=1 | x^t) for
/// t >= 2 and `edge_rate(x1)` the final step.
inline double enum_bit_model_likelihood(int steps, int x0,
                                        const std::function<double(int, int)>& reverse_rate,
                                        const std::function<double(int)>& edge_rate) {
  double total = 0.0;
  const int chains = 1 << steps;  // x^1..x^T
  for (int mask = 0; mask < chains; ++mask) {
    std::vector<int> x(steps + 1);
    x[0] = x0;
    for (int t = 1; t <= steps; ++t) x[t] = (mask >> (t - 1)) & 1;
    double p = 0.5;  // pi(x^T)
    for (int t = steps; t >= 2; --t) {
      const double r = reverse_rate(t, x[t]);
      p *= x[t - 1] ? r : 1.0 - r;
    }
    const double re = edge_rate(x[1]);
    p *= x[0] ? re : 1.0 - re;
    total += p;
  }
  return total;
}

/// Spearman rank correlation.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) r[idx[k]] = static_cast<double>(k);
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return num / std::sqrt(da * db);
}

/// Two-sample energy statistic 2 E|X-Y| - E|X-X'| - E|Y-Y'|.
inline double energy_distance(const diffusion::Mat& X, const diffusion::Mat& Y) {
  auto mean_cross = [](const diffusion::Mat& A, const diffusion::Mat& B) {
    double acc = 0.0;
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < B.rows; ++j) {
        double d2 = 0.0;
        for (int k = 0; k < A.cols; ++k) {
          const double d = A(i, k) - B(j, k);
          d2 += d * d;
        }
        acc += std::sqrt(d2);
      }
    return acc / (static_cast<double>(A.rows) * B.rows);
  };
  return 2.0 * mean_cross(X, Y) - mean_cross(X, X) - mean_cross(Y, Y);
}

/// 95th percentile of the permutation null of the energy statistic: pool the
/// two samples, split at random, recompute.
inline double energy_null_q95(const diffusion::Mat& X, const diffusion::Mat& Y, int reps,
                              diffusion::Rng& rng) {
  const int n = X.rows, m = Y.rows;
  diffusion::Mat pool(n + m, X.cols);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < X.cols; ++k) pool(i, k) = X(i, k);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < X.cols; ++k) pool(n + j, k) = Y(j, k);

  std::vector<double> stats(reps);
  std::vector<int> idx(n + m);
  for (int r = 0; r < reps; ++r) {
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n + m - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(i + 1));
      std::swap(idx[i], idx[j]);
    }
    diffusion::Mat A(n, X.cols), B(m, X.cols);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < X.cols; ++k) A(i, k) = pool(idx[i], k);
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < X.cols; ++k) B(j, k) = pool(idx[n + j], k);
    stats[r] = energy_distance(A, B);
  }
  std::sort(stats.begin(), stats.end());
  return stats[static_cast<std::size_t>(0.95 * (reps - 1))];
}

struct Running {
  double sum = 0.0, sumsq = 0.0;
  long n = 0;
  void push(double v) {
    sum += v;
    sumsq += v * v;
    ++n;
  }
  double mean() const { return sum / n; }
  double var() const { return (sumsq - sum * sum / n) / (n - 1.0); }
  double stderr_mean() const { return std::sqrt(var() / n); }
};

}  // namespace oracles
