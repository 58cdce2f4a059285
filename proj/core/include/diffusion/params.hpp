#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "diffusion/mat.hpp"
#include "diffusion/tape.hpp"

namespace diffusion {

/// Flat array of 64-bit parameters with a named layout. Each entry is a
/// contiguous rows x cols block; entries tile the array exactly once, in
/// declaration order, so flatten/unflatten is the identity.
class ParameterVector {
 public:
  struct Entry {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }
  };

  /// Appends a zero-initialized block and returns its entry index.
  std::size_t add(const std::string& name, int rows, int cols);

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const Entry& entry(const std::string& name) const;
  const std::vector<Entry>& layout() const { return entries_; }

  double* data(const std::string& name);
  const double* data(const std::string& name) const;
  Mat matrix(const std::string& name) const;
  void set_matrix(const std::string& name, const Mat& m);

  std::size_t size() const { return values_.size(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Appends every entry of `other`, prefixing names with `prefix`.
  void absorb(const ParameterVector& other, const std::string& prefix);
  /// Copies values of shared entry names from `other` (shapes must match).
  void copy_matching_from(const ParameterVector& other, const std::string& prefix);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> values_;
};

/// Vends tape leaves for parameter entries on demand; remembers which
/// entries are on the tape so gradients can be gathered back into flat form.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParameterVector& params) : tape_(tape), params_(params) {}

  /// Leaf var for the named entry (bound at most once per tape).
  Var operator()(const std::string& name);

  bool bound(const std::string& name) const { return bound_.count(name) != 0; }

  /// Gathers d(output)/d(entry) for every bound entry into a flat gradient
  /// aligned with the parameter vector; unbound entries contribute zero.
  std::vector<double> gather_gradient() const;

  const ParameterVector& params() const { return params_; }
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  const ParameterVector& params_;
  std::unordered_map<std::string, Var> bound_;
};

struct Evaluation {
  double value = 0.0;
  std::vector<double> gradient;
};

using GraphFn = std::function<Var(Tape&, ParamBinder&)>;

/// Builds the objective graph once, runs the reverse sweep, and returns the
/// scalar value plus the exact gradient with respect to every parameter.
Evaluation evaluate_with_gradients(const ParameterVector& params, const GraphFn& objective);

/// Objective value only (no reverse sweep).
double evaluate_value(const ParameterVector& params, const GraphFn& objective);

/// Central-difference check of evaluate_with_gradients over every
/// coordinate; returns max |analytic - numeric| / max(1, |analytic|, |numeric|).
/// eps must lie in [1e-7, 1e-3]. The objective must be deterministic.
double finite_difference_check(const ParameterVector& params, const GraphFn& objective,
                               double eps);

}  // namespace diffusion
