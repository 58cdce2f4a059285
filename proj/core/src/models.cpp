#include "diffusion/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace diffusion {

namespace {

std::string slot_name(const char* group, const char* part, int slot) {
  return std::string(group) + "." + part + "." + std::to_string(slot);
}

// Effective readout coefficients at time t: the slot row in per-step mode,
// the bump-weighted combination otherwise.
Mat blended(const ParameterVector& params, const char* group, const char* part,
            const ModelDescriptor& desc, int t, int steps) {
  if (desc.readout == ReadoutMode::per_step) return params.matrix(slot_name(group, part, t));
  const std::vector<double> g = bump_basis(t, desc.bumps, steps);
  Mat acc = params.matrix(slot_name(group, part, 1));
  for (double& v : acc.a) v *= g[0];
  for (int j = 2; j <= desc.bumps; ++j) {
    const Mat mj = params.matrix(slot_name(group, part, j));
    for (std::size_t i = 0; i < acc.a.size(); ++i) acc.a[i] += g[j - 1] * mj.a[i];
  }
  return acc;
}

Var blended_node(Tape& tape, ParamBinder& binder, const char* group, const char* part,
                 const ModelDescriptor& desc, int t, int steps) {
  if (desc.readout == ReadoutMode::per_step) return binder(slot_name(group, part, t));
  const std::vector<double> g = bump_basis(t, desc.bumps, steps);
  Var acc = tape.scale(binder(slot_name(group, part, 1)), g[0]);
  for (int j = 2; j <= desc.bumps; ++j)
    acc = tape.add(acc, tape.scale(binder(slot_name(group, part, j)), g[j - 1]));
  return acc;
}

Var logit_node(Tape& tape, Var beta) {
  Var one_minus = tape.offset(tape.neg(beta), 1.0);
  return tape.sub(tape.log(beta), tape.log(one_minus));
}

void check_beta_open(double beta_t) {
  if (!(beta_t > 0.0 && beta_t < 1.0))
    throw std::invalid_argument("readout_transform: beta_t must lie strictly inside (0,1)");
}

}  // namespace

std::vector<double> bump_basis(int t, int bumps, int steps) {
  if (bumps < 1) throw std::invalid_argument("bump_basis: bump count must be >= 1");
  if (t < 1 || t > steps) throw std::invalid_argument("bump_basis: t out of range");
  const double w = static_cast<double>(steps) / (bumps + 1);
  std::vector<double> g(bumps);
  double best = -1e300;
  for (int j = 1; j <= bumps; ++j) {
    const double tau = w * j;
    const double e = -(t - tau) * (t - tau) / (2.0 * w * w);
    g[j - 1] = e;
    best = std::max(best, e);
  }
  double norm = 0.0;
  for (double& v : g) {
    v = std::exp(v - best);
    norm += v;
  }
  for (double& v : g) v /= norm;
  return g;
}

DiagonalDistribution readout_transform(const std::vector<double>& z_mu,
                                       const std::vector<double>& z_sigma,
                                       const std::vector<double>& x_t, double beta_t) {
  check_beta_open(beta_t);
  if (z_mu.size() != z_sigma.size() || z_mu.size() != x_t.size())
    throw std::invalid_argument("readout_transform: dimension mismatch");
  const double lb = logit(beta_t);
  std::vector<double> mean(x_t.size()), var(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double v = logistic(z_sigma[i] + lb);
    var[i] = std::clamp(v, kVarFloor, 1.0);
    mean[i] = (x_t[i] - z_mu[i]) * (1.0 - v) + z_mu[i];
  }
  return DiagonalDistribution::gaussian(std::move(mean), std::move(var));
}

DiagonalDistribution reverse_apply(const DiffusionSpec& spec, const ReverseModel& model,
                                   const std::vector<double>& x_t, int t) {
  require_compatible(spec, model);
  if (t < 1 || t > spec.steps()) throw std::invalid_argument("reverse_apply: t out of range");
  if (static_cast<int>(x_t.size()) != spec.dim)
    throw std::invalid_argument("reverse_apply: state dimension mismatch");
  Mat X(1, spec.dim, std::vector<double>(x_t));
  Mat out, var;
  const double beta = spec.schedule.beta_at(t);
  if (spec.kind() == ProcessKind::gaussian) {
    model.apply_batch(X, t, beta, out, &var);
    return DiagonalDistribution::gaussian(out.a, var.a);
  }
  model.apply_batch(X, t, beta, out, nullptr);
  return DiagonalDistribution::bernoulli(out.a);
}

void require_compatible(const DiffusionSpec& spec, const ReverseModel& model) {
  const ModelShape& s = model.shape();
  if (s.kind != spec.kind()) throw std::invalid_argument("model/spec kind mismatch");
  if (s.dim != spec.dim) throw std::invalid_argument("model/spec dimension mismatch");
  if (s.steps != spec.steps()) throw std::invalid_argument("model/spec step count mismatch");
}

// ---------------------------------------------------------------------------
// RbfModel

RbfModel::RbfModel(const ModelShape& shape, const ModelDescriptor& desc)
    : shape_(shape), desc_(desc) {
  if (shape.kind != ProcessKind::gaussian)
    throw std::invalid_argument("RbfModel: gaussian process required");
  if (desc.hidden.size() != 1 || desc.hidden[0] < 1)
    throw std::invalid_argument("RbfModel: one positive hidden count required");
  if (desc.readout == ReadoutMode::bump && desc.bumps < 1)
    throw std::invalid_argument("RbfModel: bump readout needs bumps >= 1");
  const int h = desc.hidden[0];
  params_.add("rbf.centers", h, shape.dim);
  params_.add("rbf.logwidth", 1, h);
  for (int s = 1; s <= readout_slots(); ++s) {
    params_.add(slot_name("ro.mu", "w", s), shape.dim, h);
    params_.add(slot_name("ro.mu", "b", s), 1, shape.dim);
    params_.add(slot_name("ro.sig", "w", s), shape.dim, h);
    params_.add(slot_name("ro.sig", "b", s), 1, shape.dim);
  }
}

int RbfModel::readout_slots() const {
  return desc_.readout == ReadoutMode::per_step ? shape_.steps : desc_.bumps;
}

void RbfModel::initialize(const Mat& train_data, Rng& rng) {
  if (train_data.cols != shape_.dim || train_data.rows < 1)
    throw std::invalid_argument("RbfModel::initialize: bad training data shape");
  const int h = desc_.hidden[0];
  Mat centers(h, shape_.dim);
  for (int i = 0; i < h; ++i) {
    const int row = static_cast<int>(rng.below(train_data.rows));
    for (int j = 0; j < shape_.dim; ++j) centers(i, j) = train_data(row, j);
  }
  params_.set_matrix("rbf.centers", centers);

  std::vector<double> dists;
  for (int i = 0; i < h; ++i)
    for (int j = i + 1; j < h; ++j) {
      double d2 = 0.0;
      for (int k = 0; k < shape_.dim; ++k) {
        const double dd = centers(i, k) - centers(j, k);
        d2 += dd * dd;
      }
      dists.push_back(std::sqrt(d2));
    }
  double width = 1.0;
  if (!dists.empty()) {
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    width = std::max(dists[dists.size() / 2], 1e-3);
  }
  Mat logw(1, h);
  for (double& v : logw.a) v = std::log(width);
  params_.set_matrix("rbf.logwidth", logw);
}

Mat RbfModel::basis(const Mat& X) const {
  const Mat centers = params_.matrix("rbf.centers");
  const Mat logw = params_.matrix("rbf.logwidth");
  const int h = centers.rows;
  Mat phi(X.rows, h);
  for (int i = 0; i < X.rows; ++i) {
    double norm = 0.0;
    for (int u = 0; u < h; ++u) {
      double d2 = 0.0;
      for (int k = 0; k < X.cols; ++k) {
        const double dd = X(i, k) - centers(u, k);
        d2 += dd * dd;
      }
      const double s2 = std::exp(2.0 * logw.a[u]);
      phi(i, u) = std::exp(-d2 / (2.0 * s2));
      norm += phi(i, u);
    }
    for (int u = 0; u < h; ++u) phi(i, u) /= norm;
  }
  return phi;
}

void RbfModel::apply_batch(const Mat& X, int t, double beta_t, Mat& mean, Mat* var) const {
  const Mat phi = basis(X);
  const Mat w_mu = blended(params_, "ro.mu", "w", desc_, t, shape_.steps);
  const Mat b_mu = blended(params_, "ro.mu", "b", desc_, t, shape_.steps);
  const Mat w_sig = blended(params_, "ro.sig", "w", desc_, t, shape_.steps);
  const Mat b_sig = blended(params_, "ro.sig", "b", desc_, t, shape_.steps);

  Mat z_mu = mat_mul_nt(phi, w_mu);
  Mat z_sig = mat_mul_nt(phi, w_sig);
  for (int i = 0; i < X.rows; ++i)
    for (int j = 0; j < X.cols; ++j) {
      z_mu(i, j) += b_mu.a[j];
      z_sig(i, j) += b_sig.a[j];
    }

  mean = Mat(X.rows, X.cols);
  if (var) *var = Mat(X.rows, X.cols);
  if (desc_.output == GaussianOutputMode::transform) {
    check_beta_open(beta_t);
    const double lb = logit(beta_t);
    for (std::size_t i = 0; i < mean.a.size(); ++i) {
      const double v = logistic(z_sig.a[i] + lb);
      if (var) var->a[i] = std::clamp(v, kVarFloor, 1.0);
      mean.a[i] = (X.a[i] - z_mu.a[i]) * (1.0 - v) + z_mu.a[i];
    }
  } else {
    for (std::size_t i = 0; i < mean.a.size(); ++i) {
      mean.a[i] = z_mu.a[i];
      if (var) var->a[i] = std::clamp(logistic(z_sig.a[i]), kVarFloor, 1.0);
    }
  }
}

ReverseGraphOutput RbfModel::graph_apply(Tape& tape, ParamBinder& binder, Var x_t, int t,
                                         Var beta_t) const {
  Var centers = binder("rbf.centers");
  Var logw = binder("rbf.logwidth");

  // Squared distances via the expansion |x|^2 - 2 x.c + |c|^2.
  Var x_sq = tape.sum_rows(tape.mul(x_t, x_t));              // [n,1]
  Var c_sq = tape.transpose(tape.sum_rows(tape.mul(centers, centers)));  // [1,h]
  Var cross = tape.scale(tape.matmul_nt(x_t, centers), -2.0);
  Var d2 = tape.add_rowvec(tape.add_colvec(cross, x_sq), c_sq);

  Var inv_two_s2 = tape.scale(tape.recip(tape.exp(tape.scale(logw, 2.0))), 0.5);  // [1,h]
  Var act = tape.exp(tape.neg(tape.mul_rowvec(d2, inv_two_s2)));
  Var phi = tape.mul_colvec(act, tape.recip(tape.sum_rows(act)));

  Var z_mu = tape.add_rowvec(tape.matmul_nt(phi, blended_node(tape, binder, "ro.mu", "w", desc_, t, shape_.steps)),
                             blended_node(tape, binder, "ro.mu", "b", desc_, t, shape_.steps));
  Var z_sig = tape.add_rowvec(tape.matmul_nt(phi, blended_node(tape, binder, "ro.sig", "w", desc_, t, shape_.steps)),
                              blended_node(tape, binder, "ro.sig", "b", desc_, t, shape_.steps));

  ReverseGraphOutput out;
  if (desc_.output == GaussianOutputMode::transform) {
    Var v = tape.sigmoid(tape.add_bscalar(z_sig, logit_node(tape, beta_t)));
    out.var = tape.clamp(v, kVarFloor, 1.0);
    Var keep = tape.offset(tape.neg(v), 1.0);
    out.mean_or_rate = tape.add(tape.mul(tape.sub(x_t, z_mu), keep), z_mu);
  } else {
    out.var = tape.clamp(tape.sigmoid(z_sig), kVarFloor, 1.0);
    out.mean_or_rate = z_mu;
  }
  return out;
}

// ---------------------------------------------------------------------------
// MlpModel

MlpModel::MlpModel(const ModelShape& shape, const ModelDescriptor& desc)
    : shape_(shape), desc_(desc) {
  if (shape.kind != ProcessKind::binomial)
    throw std::invalid_argument("MlpModel: binomial process required");
  if (desc.hidden.empty()) throw std::invalid_argument("MlpModel: at least one hidden layer");
  if (desc.readout == ReadoutMode::bump && desc.bumps < 1)
    throw std::invalid_argument("MlpModel: bump readout needs bumps >= 1");
  int fan_in = shape.dim;
  for (std::size_t l = 0; l < desc.hidden.size(); ++l) {
    const int h = desc.hidden[l];
    if (h < 1) throw std::invalid_argument("MlpModel: hidden sizes must be positive");
    params_.add("mlp.w." + std::to_string(l + 1), h, fan_in);
    params_.add("mlp.b." + std::to_string(l + 1), 1, h);
    fan_in = h;
  }
  for (int s = 1; s <= readout_slots(); ++s) {
    params_.add(slot_name("ro", "w", s), shape.dim, fan_in);
    params_.add(slot_name("ro", "b", s), 1, shape.dim);
  }
}

int MlpModel::readout_slots() const {
  return desc_.readout == ReadoutMode::per_step ? shape_.steps : desc_.bumps;
}

void MlpModel::initialize(Rng& rng) {
  int fan_in = shape_.dim;
  for (std::size_t l = 0; l < desc_.hidden.size(); ++l) {
    const std::string name = "mlp.w." + std::to_string(l + 1);
    const ParameterVector::Entry& e = params_.entry(name);
    Mat w(e.rows, e.cols);
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.a) v = s * rng.normal();
    params_.set_matrix(name, w);
    fan_in = desc_.hidden[l];
  }
  // Readout rows stay zero: sigmoid(0) = 0.5 everywhere.
}

Mat MlpModel::hidden_forward(const Mat& X) const {
  Mat h = X;
  for (std::size_t l = 0; l < desc_.hidden.size(); ++l) {
    const Mat w = params_.matrix("mlp.w." + std::to_string(l + 1));
    const Mat b = params_.matrix("mlp.b." + std::to_string(l + 1));
    Mat z = mat_mul_nt(h, w);
    for (int i = 0; i < z.rows; ++i)
      for (int j = 0; j < z.cols; ++j) z(i, j) = logistic(z(i, j) + b.a[j]);
    h = std::move(z);
  }
  return h;
}

void MlpModel::apply_batch(const Mat& X, int t, double /*beta_t*/, Mat& rate, Mat* var) const {
  if (var) throw std::invalid_argument("MlpModel produces rates, not variances");
  const Mat h = hidden_forward(X);
  const Mat w = blended(params_, "ro", "w", desc_, t, shape_.steps);
  const Mat b = blended(params_, "ro", "b", desc_, t, shape_.steps);
  rate = mat_mul_nt(h, w);
  for (int i = 0; i < rate.rows; ++i)
    for (int j = 0; j < rate.cols; ++j)
      rate(i, j) = std::clamp(logistic(rate(i, j) + b.a[j]), kRateFloor, 1.0 - kRateFloor);
}

ReverseGraphOutput MlpModel::graph_apply(Tape& tape, ParamBinder& binder, Var x_t, int t,
                                         Var /*beta_t*/) const {
  Var h = x_t;
  for (std::size_t l = 0; l < desc_.hidden.size(); ++l) {
    Var w = binder("mlp.w." + std::to_string(l + 1));
    Var b = binder("mlp.b." + std::to_string(l + 1));
    h = tape.sigmoid(tape.add_rowvec(tape.matmul_nt(h, w), b));
  }
  Var z = tape.add_rowvec(tape.matmul_nt(h, blended_node(tape, binder, "ro", "w", desc_, t, shape_.steps)),
                          blended_node(tape, binder, "ro", "b", desc_, t, shape_.steps));
  ReverseGraphOutput out;
  out.mean_or_rate = tape.clamp(tape.sigmoid(z), kRateFloor, 1.0 - kRateFloor);
  return out;
}

// ---------------------------------------------------------------------------
// AnalyticGaussianModel

AnalyticGaussianModel::AnalyticGaussianModel(const ModelShape& shape) : shape_(shape) {
  if (shape.kind != ProcessKind::gaussian)
    throw std::invalid_argument("AnalyticGaussianModel: gaussian process required");
  desc_.family = ModelFamily::analytic_gaussian;
  desc_.hidden.clear();
}

void AnalyticGaussianModel::apply_batch(const Mat& X, int /*t*/, double beta_t, Mat& mean,
                                        Mat* var) const {
  const double keep = std::sqrt(1.0 - beta_t);
  mean = X;
  for (double& v : mean.a) v *= keep;
  if (var) {
    *var = Mat(X.rows, X.cols);
    for (double& v : var->a) v = clamp_var(beta_t);
  }
}

ReverseGraphOutput AnalyticGaussianModel::graph_apply(Tape& tape, ParamBinder& /*binder*/,
                                                      Var x_t, int /*t*/, Var beta_t) const {
  ReverseGraphOutput out;
  Var keep = tape.sqrt(tape.offset(tape.neg(beta_t), 1.0));
  out.mean_or_rate = tape.mul_bscalar(x_t, keep);
  Mat ones(tape.rows(x_t), tape.cols(x_t));
  for (double& v : ones.a) v = 1.0;
  out.var = tape.clamp(tape.mul_bscalar(tape.constant(std::move(ones)), beta_t), kVarFloor, 1.0);
  return out;
}

std::unique_ptr<ReverseModel> make_model(const DiffusionSpec& spec, const ModelDescriptor& desc,
                                         Rng& rng, const Mat* train_data) {
  ModelShape shape{spec.kind(), spec.steps(), spec.dim};
  switch (desc.family) {
    case ModelFamily::rbf: {
      auto m = std::make_unique<RbfModel>(shape, desc);
      if (train_data) m->initialize(*train_data, rng);
      return m;
    }
    case ModelFamily::mlp: {
      auto m = std::make_unique<MlpModel>(shape, desc);
      m->initialize(rng);
      return m;
    }
    case ModelFamily::analytic_gaussian:
      return std::make_unique<AnalyticGaussianModel>(shape);
  }
  throw std::invalid_argument("make_model: unknown family");
}

}  // namespace diffusion
