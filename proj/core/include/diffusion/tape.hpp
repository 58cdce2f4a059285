#pragma once

#include <string>
#include <vector>

#include "diffusion/mat.hpp"

namespace diffusion {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode autodiff over dense matrix nodes, define-by-run.
///
/// Values are computed eagerly as ops are recorded and checked for
/// finiteness; a non-finite intermediate raises immediately, naming the op
/// and the enclosing context (see push_context). backward() runs the
/// reverse sweep from a scalar output and accumulates gradients into every
/// reachable node. Nodes are never mutated after creation, so a graph can
/// be evaluated and differentiated exactly once per tape.
class Tape {
 public:
  enum class Op {
    constant, leaf,
    add, sub, mul, div_,
    neg, exp_, log_, sqrt_, sigmoid_, tanh_, recip,
    scale, offset, clamp_,
    matmul, matmul_nt,
    add_rowvec, add_colvec, mul_rowvec, mul_colvec,
    add_bscalar, mul_bscalar,
    sum_all, sum_rows, sum_cols,
    transpose_
  };

  Var constant(Mat value);
  Var constant_scalar(double value);
  Var leaf(Mat value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var recip(Var a);
  Var scale(Var a, double c);
  Var offset(Var a, double c);
  Var clamp(Var a, double lo, double hi);
  Var matmul(Var a, Var b);     // A[m,k] * B[k,n]
  Var matmul_nt(Var a, Var b);  // A[m,k] * B[n,k]^T
  Var add_rowvec(Var m, Var r);
  Var add_colvec(Var m, Var c);
  Var mul_rowvec(Var m, Var r);
  Var mul_colvec(Var m, Var c);
  Var add_bscalar(Var m, Var s);  // s is 1x1
  Var mul_bscalar(Var m, Var s);
  Var sum_all(Var a);
  Var sum_rows(Var a);  // [m,n] -> [m,1]
  Var sum_cols(Var a);  // [m,n] -> [1,n]
  Var transpose(Var a);
  Var mean_all(Var a);

  const Mat& value(Var v) const { return nodes_[v.id].val; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  double scalar(Var v) const { return nodes_[v.id].val.a[0]; }
  int rows(Var v) const { return nodes_[v.id].val.rows; }
  int cols(Var v) const { return nodes_[v.id].val.cols; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 output node.
  void backward(Var output);

  /// Context labels for non-finite diagnostics; pair with pop_context().
  void push_context(std::string label);
  void pop_context();

 private:
  struct Node {
    Op op;
    int a = -1, b = -1;
    double c0 = 0.0, c1 = 0.0;
    Mat val;
    Mat grad;
    int ctx = -1;
  };

  Var record(Op op, int a, int b, Mat val, double c0 = 0.0, double c1 = 0.0);
  void check_finite(const Node& n) const;
  [[noreturn]] void raise_non_finite(const Node& n) const;

  std::vector<Node> nodes_;
  std::vector<std::string> contexts_;
};

/// RAII context label for tape diagnostics.
class TapeContext {
 public:
  TapeContext(Tape& tape, std::string label) : tape_(tape) {
    tape_.push_context(std::move(label));
  }
  ~TapeContext() { tape_.pop_context(); }
  TapeContext(const TapeContext&) = delete;
  TapeContext& operator=(const TapeContext&) = delete;

 private:
  Tape& tape_;
};

const char* op_name(Tape::Op op);

}  // namespace diffusion
