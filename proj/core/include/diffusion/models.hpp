#pragma once

#include <memory>
#include <vector>

#include "diffusion/distribution.hpp"
#include "diffusion/kernels.hpp"
#include "diffusion/params.hpp"
#include "diffusion/rng.hpp"
#include "diffusion/schedule.hpp"
#include "diffusion/tape.hpp"

namespace diffusion {

enum class ModelFamily { rbf, mlp, analytic_gaussian };
enum class ReadoutMode { per_step, bump };
enum class GaussianOutputMode { transform, direct };

struct ModelDescriptor {
  ModelFamily family = ModelFamily::rbf;
  ReadoutMode readout = ReadoutMode::per_step;
  int bumps = 0;                // J, bump mode only
  std::vector<int> hidden;      // rbf: {H}; mlp: one size per hidden layer
  GaussianOutputMode output = GaussianOutputMode::transform;
};

/// Structural shape of a model: process kind, trajectory length, state dim.
struct ModelShape {
  ProcessKind kind = ProcessKind::gaussian;
  int steps = 0;
  int dim = 0;
};

/// Softmax-normalized Gaussian bumps over the time axis: centers evenly
/// spaced in (0, T), width equal to the center spacing. Weights sum to 1.
std::vector<double> bump_basis(int t, int bumps, int steps);

/// Readout parameterized as a perturbation around the forward kernel:
///   var_i  = logistic(z_sigma_i + logit(beta_t))
///   mean_i = (x_t_i - z_mu_i) * (1 - var_i) + z_mu_i
/// beta_t in {0,1} is rejected (logit undefined).
DiagonalDistribution readout_transform(const std::vector<double>& z_mu,
                                       const std::vector<double>& z_sigma,
                                       const std::vector<double>& x_t, double beta_t);

/// Tape nodes produced by a reverse model at one time index.
struct ReverseGraphOutput {
  Var mean_or_rate;  // gaussian mean or bernoulli rate, [n, d]
  Var var;           // gaussian only
};

/// Parameterized family mapping (state, time index) to the reverse-kernel
/// distribution. The current diffusion rate is always passed in explicitly;
/// models never cache schedule values, so a learnable schedule can move
/// under them. The plain path serves sampling and bound evaluation; the
/// tape path serves gradient work. Tests pin the two paths together.
class ReverseModel {
 public:
  virtual ~ReverseModel() = default;

  virtual const ModelDescriptor& descriptor() const = 0;
  virtual const ModelShape& shape() const = 0;
  virtual ParameterVector& params() = 0;
  virtual const ParameterVector& params() const = 0;

  /// Batched evaluation: X holds one state per row. For gaussian models
  /// `var` receives the per-dimension variances; for bernoulli it may be
  /// null and `mean_or_rate` receives rates.
  virtual void apply_batch(const Mat& X, int t, double beta_t, Mat& mean_or_rate,
                           Mat* var) const = 0;

  /// Same computation on a tape; `beta_t` is a 1x1 node (constant or
  /// schedule-derived).
  virtual ReverseGraphOutput graph_apply(Tape& tape, ParamBinder& binder, Var x_t, int t,
                                         Var beta_t) const = 0;
};

/// Reverse-kernel distribution for a single state; rates/variances come from
/// the model family, the diffusion rate from the spec's current schedule.
DiagonalDistribution reverse_apply(const DiffusionSpec& spec, const ReverseModel& model,
                                   const std::vector<double>& x_t, int t);

/// Normalized radial basis network for gaussian reverse kernels: shared
/// centers/widths, readout rows per time step (or per bump), sigmoid-squashed
/// variance output.
class RbfModel : public ReverseModel {
 public:
  RbfModel(const ModelShape& shape, const ModelDescriptor& desc);

  /// Centers drawn from training rows; log-widths set to the median
  /// inter-center distance. Readout rows start at zero.
  void initialize(const Mat& train_data, Rng& rng);

  const ModelDescriptor& descriptor() const override { return desc_; }
  const ModelShape& shape() const override { return shape_; }
  ParameterVector& params() override { return params_; }
  const ParameterVector& params() const override { return params_; }
  void apply_batch(const Mat& X, int t, double beta_t, Mat& mean, Mat* var) const override;
  ReverseGraphOutput graph_apply(Tape& tape, ParamBinder& binder, Var x_t, int t,
                                 Var beta_t) const override;

 private:
  int readout_slots() const;
  Mat basis(const Mat& X) const;

  ModelShape shape_;
  ModelDescriptor desc_;
  ParameterVector params_;
};

/// Sigmoid MLP for bernoulli reverse kernels: hidden stack shared across all
/// time steps, readout row per time step (or per bump), sigmoid output.
class MlpModel : public ReverseModel {
 public:
  MlpModel(const ModelShape& shape, const ModelDescriptor& desc);

  /// Hidden weights ~ N(0, 1/fan_in); readout rows start at zero so the
  /// initial reverse kernel is the uninformative rate 0.5.
  void initialize(Rng& rng);

  const ModelDescriptor& descriptor() const override { return desc_; }
  const ModelShape& shape() const override { return shape_; }
  ParameterVector& params() override { return params_; }
  const ParameterVector& params() const override { return params_; }
  void apply_batch(const Mat& X, int t, double beta_t, Mat& rate, Mat* var) const override;
  ReverseGraphOutput graph_apply(Tape& tape, ParamBinder& binder, Var x_t, int t,
                                 Var beta_t) const override;

 private:
  int readout_slots() const;
  Mat hidden_forward(const Mat& X) const;

  ModelShape shape_;
  ModelDescriptor desc_;
  ParameterVector params_;
};

/// Parameter-free reference kernel N(x sqrt(1-beta_t), beta_t I): the exact
/// reversal of the forward process when the data are standard normal.
class AnalyticGaussianModel : public ReverseModel {
 public:
  explicit AnalyticGaussianModel(const ModelShape& shape);

  const ModelDescriptor& descriptor() const override { return desc_; }
  const ModelShape& shape() const override { return shape_; }
  ParameterVector& params() override { return params_; }
  const ParameterVector& params() const override { return params_; }
  void apply_batch(const Mat& X, int t, double beta_t, Mat& mean, Mat* var) const override;
  ReverseGraphOutput graph_apply(Tape& tape, ParamBinder& binder, Var x_t, int t,
                                 Var beta_t) const override;

 private:
  ModelShape shape_;
  ModelDescriptor desc_;
  ParameterVector params_;
};

/// Instantiates and initializes a model matching `spec`. `train_data` seeds
/// RBF centers and may be null for other families.
std::unique_ptr<ReverseModel> make_model(const DiffusionSpec& spec, const ModelDescriptor& desc,
                                         Rng& rng, const Mat* train_data);

/// Shape/kind compatibility check used by every spec+model entry point.
void require_compatible(const DiffusionSpec& spec, const ReverseModel& model);

}  // namespace diffusion
