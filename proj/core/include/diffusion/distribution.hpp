#pragma once

#include <stdexcept>
#include <vector>

namespace diffusion {

enum class ProcessKind { gaussian, binomial };

/// Product distribution over d coordinates: either independent Gaussians
/// (per-dimension mean and variance) or independent Bernoulli rates.
/// Every kernel operation preserves the kind of its inputs.
struct DiagonalDistribution {
  enum class Kind { gaussian, bernoulli };

  Kind kind = Kind::gaussian;
  std::vector<double> mean;  // gaussian
  std::vector<double> var;   // gaussian, strictly positive
  std::vector<double> rate;  // bernoulli, in [0, 1]

  int dim() const {
    return kind == Kind::gaussian ? static_cast<int>(mean.size())
                                  : static_cast<int>(rate.size());
  }

  static DiagonalDistribution gaussian(std::vector<double> mean, std::vector<double> var) {
    if (mean.size() != var.size()) throw std::invalid_argument("gaussian: mean/var size mismatch");
    for (double v : var)
      if (!(v > 0.0)) throw std::invalid_argument("gaussian: variance must be positive");
    DiagonalDistribution d;
    d.kind = Kind::gaussian;
    d.mean = std::move(mean);
    d.var = std::move(var);
    return d;
  }

  static DiagonalDistribution bernoulli(std::vector<double> rate) {
    for (double r : rate)
      if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("bernoulli: rate outside [0,1]");
    DiagonalDistribution d;
    d.kind = Kind::bernoulli;
    d.rate = std::move(rate);
    return d;
  }
};

inline DiagonalDistribution::Kind dist_kind_of(ProcessKind k) {
  return k == ProcessKind::gaussian ? DiagonalDistribution::Kind::gaussian
                                    : DiagonalDistribution::Kind::bernoulli;
}

}  // namespace diffusion
