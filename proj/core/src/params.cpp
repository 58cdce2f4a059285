#include "diffusion/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace diffusion {

std::size_t ParameterVector::add(const std::string& name, int rows, int cols) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter entry: " + name);
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("parameter entry must be non-empty");
  Entry e;
  e.name = name;
  e.offset = values_.size();
  e.rows = rows;
  e.cols = cols;
  values_.resize(values_.size() + e.count(), 0.0);
  index_[name] = entries_.size();
  entries_.push_back(e);
  return entries_.size() - 1;
}

const ParameterVector::Entry& ParameterVector::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter entry: " + name);
  return entries_[it->second];
}

double* ParameterVector::data(const std::string& name) { return values_.data() + entry(name).offset; }
const double* ParameterVector::data(const std::string& name) const {
  return values_.data() + entry(name).offset;
}

Mat ParameterVector::matrix(const std::string& name) const {
  const Entry& e = entry(name);
  Mat m(e.rows, e.cols);
  std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(e.offset), e.count(), m.a.begin());
  return m;
}

void ParameterVector::set_matrix(const std::string& name, const Mat& m) {
  const Entry& e = entry(name);
  if (m.rows != e.rows || m.cols != e.cols)
    throw std::invalid_argument("set_matrix: shape mismatch for " + name);
  std::copy(m.a.begin(), m.a.end(), values_.begin() + static_cast<std::ptrdiff_t>(e.offset));
}

void ParameterVector::absorb(const ParameterVector& other, const std::string& prefix) {
  for (const Entry& e : other.layout()) {
    add(prefix + e.name, e.rows, e.cols);
    set_matrix(prefix + e.name, other.matrix(e.name));
  }
}

void ParameterVector::copy_matching_from(const ParameterVector& other, const std::string& prefix) {
  for (Entry& e : entries_) {
    const std::string src = prefix + e.name;
    if (!other.has(src)) continue;
    set_matrix(e.name, other.matrix(src));
  }
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_.leaf(params_.matrix(name));
  bound_[name] = v;
  return v;
}

std::vector<double> ParamBinder::gather_gradient() const {
  std::vector<double> grad(params_.size(), 0.0);
  for (const auto& [name, var] : bound_) {
    const ParameterVector::Entry& e = params_.entry(name);
    const Mat& g = tape_.grad(var);
    if (g.a.empty()) continue;  // backward not run or node unreachable
    std::copy(g.a.begin(), g.a.end(), grad.begin() + static_cast<std::ptrdiff_t>(e.offset));
  }
  return grad;
}

Evaluation evaluate_with_gradients(const ParameterVector& params, const GraphFn& objective) {
  Tape tape;
  ParamBinder binder(tape, params);
  Var out = objective(tape, binder);
  if (tape.rows(out) != 1 || tape.cols(out) != 1)
    throw std::invalid_argument("objective must produce a scalar");
  tape.backward(out);
  Evaluation ev;
  ev.value = tape.scalar(out);
  ev.gradient = binder.gather_gradient();
  return ev;
}

double evaluate_value(const ParameterVector& params, const GraphFn& objective) {
  Tape tape;
  ParamBinder binder(tape, params);
  Var out = objective(tape, binder);
  if (tape.rows(out) != 1 || tape.cols(out) != 1)
    throw std::invalid_argument("objective must produce a scalar");
  return tape.scalar(out);
}

double finite_difference_check(const ParameterVector& params, const GraphFn& objective,
                               double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw std::invalid_argument("finite_difference_check: eps outside [1e-7, 1e-3]");
  const Evaluation ev = evaluate_with_gradients(params, objective);
  ParameterVector work = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = work.values()[i];
    work.values()[i] = saved + eps;
    const double up = evaluate_value(work, objective);
    work.values()[i] = saved - eps;
    const double down = evaluate_value(work, objective);
    work.values()[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = ev.gradient[i];
    const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
    worst = std::max(worst, std::fabs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace diffusion
