#include "diffusion/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace diffusion {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

const char* op_name(Tape::Op op) {
  switch (op) {
    case Tape::Op::constant: return "constant";
    case Tape::Op::leaf: return "leaf";
    case Tape::Op::add: return "add";
    case Tape::Op::sub: return "sub";
    case Tape::Op::mul: return "mul";
    case Tape::Op::div_: return "div";
    case Tape::Op::neg: return "neg";
    case Tape::Op::exp_: return "exp";
    case Tape::Op::log_: return "log";
    case Tape::Op::sqrt_: return "sqrt";
    case Tape::Op::sigmoid_: return "sigmoid";
    case Tape::Op::tanh_: return "tanh";
    case Tape::Op::recip: return "recip";
    case Tape::Op::scale: return "scale";
    case Tape::Op::offset: return "offset";
    case Tape::Op::clamp_: return "clamp";
    case Tape::Op::matmul: return "matmul";
    case Tape::Op::matmul_nt: return "matmul_nt";
    case Tape::Op::add_rowvec: return "add_rowvec";
    case Tape::Op::add_colvec: return "add_colvec";
    case Tape::Op::mul_rowvec: return "mul_rowvec";
    case Tape::Op::mul_colvec: return "mul_colvec";
    case Tape::Op::add_bscalar: return "add_bscalar";
    case Tape::Op::mul_bscalar: return "mul_bscalar";
    case Tape::Op::sum_all: return "sum_all";
    case Tape::Op::sum_rows: return "sum_rows";
    case Tape::Op::sum_cols: return "sum_cols";
    case Tape::Op::transpose_: return "transpose";
  }
  return "?";
}

void Tape::push_context(std::string label) { contexts_.push_back(std::move(label)); }
void Tape::pop_context() { contexts_.pop_back(); }

void Tape::raise_non_finite(const Node& n) const {
  std::string where = op_name(n.op);
  if (n.ctx >= 0) where += " in " + contexts_[n.ctx];
  throw std::runtime_error("non-finite value produced by " + where);
}

void Tape::check_finite(const Node& n) const {
  for (double v : n.val.a)
    if (!std::isfinite(v)) raise_non_finite(n);
}

Var Tape::record(Op op, int a, int b, Mat val, double c0, double c1) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.c0 = c0;
  n.c1 = c1;
  n.val = std::move(val);
  n.ctx = contexts_.empty() ? -1 : static_cast<int>(contexts_.size()) - 1;
  check_finite(n);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat value) { return record(Op::constant, -1, -1, std::move(value)); }
Var Tape::constant_scalar(double value) { return constant(Mat(1, 1, {value})); }
Var Tape::leaf(Mat value) { return record(Op::leaf, -1, -1, std::move(value)); }

#define DK_VAL(v) nodes_[(v).id].val

Var Tape::add(Var a, Var b) {
  require(DK_VAL(a).same_shape(DK_VAL(b)), "add: shape mismatch");
  Mat out = DK_VAL(a);
  const Mat& vb = DK_VAL(b);
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += vb.a[i];
  return record(Op::add, a.id, b.id, std::move(out));
}

Var Tape::sub(Var a, Var b) {
  require(DK_VAL(a).same_shape(DK_VAL(b)), "sub: shape mismatch");
  Mat out = DK_VAL(a);
  const Mat& vb = DK_VAL(b);
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] -= vb.a[i];
  return record(Op::sub, a.id, b.id, std::move(out));
}

Var Tape::mul(Var a, Var b) {
  require(DK_VAL(a).same_shape(DK_VAL(b)), "mul: shape mismatch");
  Mat out = DK_VAL(a);
  const Mat& vb = DK_VAL(b);
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] *= vb.a[i];
  return record(Op::mul, a.id, b.id, std::move(out));
}

Var Tape::div(Var a, Var b) {
  require(DK_VAL(a).same_shape(DK_VAL(b)), "div: shape mismatch");
  Mat out = DK_VAL(a);
  const Mat& vb = DK_VAL(b);
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] /= vb.a[i];
  return record(Op::div_, a.id, b.id, std::move(out));
}

Var Tape::neg(Var a) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v = -v;
  return record(Op::neg, a.id, -1, std::move(out));
}

Var Tape::exp(Var a) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v = std::exp(v);
  return record(Op::exp_, a.id, -1, std::move(out));
}

Var Tape::log(Var a) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v = std::log(v);
  return record(Op::log_, a.id, -1, std::move(out));
}

Var Tape::sqrt(Var a) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v = std::sqrt(v);
  return record(Op::sqrt_, a.id, -1, std::move(out));
}

Var Tape::sigmoid(Var a) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v = 1.0 / (1.0 + std::exp(-v));
  return record(Op::sigmoid_, a.id, -1, std::move(out));
}

Var Tape::tanh(Var a) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v = std::tanh(v);
  return record(Op::tanh_, a.id, -1, std::move(out));
}

Var Tape::recip(Var a) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v = 1.0 / v;
  return record(Op::recip, a.id, -1, std::move(out));
}

Var Tape::scale(Var a, double c) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v *= c;
  return record(Op::scale, a.id, -1, std::move(out), c);
}

Var Tape::offset(Var a, double c) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v += c;
  return record(Op::offset, a.id, -1, std::move(out), c);
}

Var Tape::clamp(Var a, double lo, double hi) {
  Mat out = DK_VAL(a);
  for (double& v : out.a) v = v < lo ? lo : (v > hi ? hi : v);
  return record(Op::clamp_, a.id, -1, std::move(out), lo, hi);
}

Var Tape::matmul(Var a, Var b) {
  const Mat& va = DK_VAL(a);
  const Mat& vb = DK_VAL(b);
  require(va.cols == vb.rows, "matmul: inner dimension mismatch");
  Mat out(va.rows, vb.cols);
  gemm_nn_acc(va, vb, out);
  return record(Op::matmul, a.id, b.id, std::move(out));
}

Var Tape::matmul_nt(Var a, Var b) {
  const Mat& va = DK_VAL(a);
  const Mat& vb = DK_VAL(b);
  require(va.cols == vb.cols, "matmul_nt: inner dimension mismatch");
  Mat out(va.rows, vb.rows);
  gemm_nt_acc(va, vb, out);
  return record(Op::matmul_nt, a.id, b.id, std::move(out));
}

Var Tape::add_rowvec(Var m, Var r) {
  const Mat& vm = DK_VAL(m);
  const Mat& vr = DK_VAL(r);
  require(vr.rows == 1 && vr.cols == vm.cols, "add_rowvec: shape mismatch");
  Mat out = vm;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) += vr.a[j];
  return record(Op::add_rowvec, m.id, r.id, std::move(out));
}

Var Tape::add_colvec(Var m, Var c) {
  const Mat& vm = DK_VAL(m);
  const Mat& vc = DK_VAL(c);
  require(vc.cols == 1 && vc.rows == vm.rows, "add_colvec: shape mismatch");
  Mat out = vm;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) += vc.a[i];
  return record(Op::add_colvec, m.id, c.id, std::move(out));
}

Var Tape::mul_rowvec(Var m, Var r) {
  const Mat& vm = DK_VAL(m);
  const Mat& vr = DK_VAL(r);
  require(vr.rows == 1 && vr.cols == vm.cols, "mul_rowvec: shape mismatch");
  Mat out = vm;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) *= vr.a[j];
  return record(Op::mul_rowvec, m.id, r.id, std::move(out));
}

Var Tape::mul_colvec(Var m, Var c) {
  const Mat& vm = DK_VAL(m);
  const Mat& vc = DK_VAL(c);
  require(vc.cols == 1 && vc.rows == vm.rows, "mul_colvec: shape mismatch");
  Mat out = vm;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) *= vc.a[i];
  return record(Op::mul_colvec, m.id, c.id, std::move(out));
}

Var Tape::add_bscalar(Var m, Var s) {
  const Mat& vs = DK_VAL(s);
  require(vs.rows == 1 && vs.cols == 1, "add_bscalar: scalar expected");
  Mat out = DK_VAL(m);
  for (double& v : out.a) v += vs.a[0];
  return record(Op::add_bscalar, m.id, s.id, std::move(out));
}

Var Tape::mul_bscalar(Var m, Var s) {
  const Mat& vs = DK_VAL(s);
  require(vs.rows == 1 && vs.cols == 1, "mul_bscalar: scalar expected");
  Mat out = DK_VAL(m);
  for (double& v : out.a) v *= vs.a[0];
  return record(Op::mul_bscalar, m.id, s.id, std::move(out));
}

Var Tape::sum_all(Var a) {
  const Mat& va = DK_VAL(a);
  double acc = 0.0;
  for (double v : va.a) acc += v;
  return record(Op::sum_all, a.id, -1, Mat(1, 1, {acc}));
}

Var Tape::sum_rows(Var a) {
  const Mat& va = DK_VAL(a);
  Mat out(va.rows, 1);
  for (int i = 0; i < va.rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < va.cols; ++j) acc += va(i, j);
    out(i, 0) = acc;
  }
  return record(Op::sum_rows, a.id, -1, std::move(out));
}

Var Tape::sum_cols(Var a) {
  const Mat& va = DK_VAL(a);
  Mat out(1, va.cols);
  for (int i = 0; i < va.rows; ++i)
    for (int j = 0; j < va.cols; ++j) out(0, j) += va(i, j);
  return record(Op::sum_cols, a.id, -1, std::move(out));
}

Var Tape::transpose(Var a) {
  const Mat& va = DK_VAL(a);
  Mat out(va.cols, va.rows);
  for (int i = 0; i < va.rows; ++i)
    for (int j = 0; j < va.cols; ++j) out(j, i) = va(i, j);
  return record(Op::transpose_, a.id, -1, std::move(out));
}

Var Tape::mean_all(Var a) {
  const Mat& va = DK_VAL(a);
  return scale(sum_all(a), 1.0 / static_cast<double>(va.a.size()));
}

#undef DK_VAL

void Tape::backward(Var output) {
  Node& out = nodes_[output.id];
  require(out.val.rows == 1 && out.val.cols == 1, "backward: output must be scalar");

  for (Node& n : nodes_)
    if (n.grad.a.empty()) n.grad = Mat(n.val.rows, n.val.cols);
  out.grad.a[0] = 1.0;

  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[id];
    const Mat& g = n.grad;
    bool any = false;
    for (double v : g.a)
      if (v != 0.0) { any = true; break; }
    if (!any) continue;

    Mat* ga = n.a >= 0 ? &nodes_[n.a].grad : nullptr;
    Mat* gb = n.b >= 0 ? &nodes_[n.b].grad : nullptr;
    const Mat* va = n.a >= 0 ? &nodes_[n.a].val : nullptr;
    const Mat* vb = n.b >= 0 ? &nodes_[n.b].val : nullptr;

    switch (n.op) {
      case Op::constant:
      case Op::leaf:
        break;
      case Op::add:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          ga->a[i] += g.a[i];
          gb->a[i] += g.a[i];
        }
        break;
      case Op::sub:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          ga->a[i] += g.a[i];
          gb->a[i] -= g.a[i];
        }
        break;
      case Op::mul:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          ga->a[i] += g.a[i] * vb->a[i];
          gb->a[i] += g.a[i] * va->a[i];
        }
        break;
      case Op::div_:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          const double inv_b = 1.0 / vb->a[i];
          ga->a[i] += g.a[i] * inv_b;
          gb->a[i] -= g.a[i] * n.val.a[i] * inv_b;
        }
        break;
      case Op::neg:
        for (std::size_t i = 0; i < g.a.size(); ++i) ga->a[i] -= g.a[i];
        break;
      case Op::exp_:
        for (std::size_t i = 0; i < g.a.size(); ++i) ga->a[i] += g.a[i] * n.val.a[i];
        break;
      case Op::log_:
        for (std::size_t i = 0; i < g.a.size(); ++i) ga->a[i] += g.a[i] / va->a[i];
        break;
      case Op::sqrt_:
        for (std::size_t i = 0; i < g.a.size(); ++i) ga->a[i] += 0.5 * g.a[i] / n.val.a[i];
        break;
      case Op::sigmoid_:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          const double s = n.val.a[i];
          ga->a[i] += g.a[i] * s * (1.0 - s);
        }
        break;
      case Op::tanh_:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          const double th = n.val.a[i];
          ga->a[i] += g.a[i] * (1.0 - th * th);
        }
        break;
      case Op::recip:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          const double r = n.val.a[i];
          ga->a[i] -= g.a[i] * r * r;
        }
        break;
      case Op::scale:
        for (std::size_t i = 0; i < g.a.size(); ++i) ga->a[i] += n.c0 * g.a[i];
        break;
      case Op::offset:
        for (std::size_t i = 0; i < g.a.size(); ++i) ga->a[i] += g.a[i];
        break;
      case Op::clamp_:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          const double x = va->a[i];
          if (x > n.c0 && x < n.c1) ga->a[i] += g.a[i];
        }
        break;
      case Op::matmul:
        gemm_nt_acc(g, *vb, *ga);  // gA += g * B^T
        gemm_tn_acc(*va, g, *gb);  // gB += A^T * g
        break;
      case Op::matmul_nt:
        gemm_nn_acc(g, *vb, *ga);  // gA += g * B
        gemm_tn_acc(g, *va, *gb);  // gB += g^T * A
        break;
      case Op::add_rowvec:
        for (std::size_t i = 0; i < g.a.size(); ++i) ga->a[i] += g.a[i];
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) gb->a[j] += g(i, j);
        break;
      case Op::add_colvec:
        for (std::size_t i = 0; i < g.a.size(); ++i) ga->a[i] += g.a[i];
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) gb->a[i] += g(i, j);
        break;
      case Op::mul_rowvec:
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) {
            ga->operator()(i, j) += g(i, j) * vb->a[j];
            gb->a[j] += g(i, j) * va->operator()(i, j);
          }
        break;
      case Op::mul_colvec:
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) {
            ga->operator()(i, j) += g(i, j) * vb->a[i];
            gb->a[i] += g(i, j) * va->operator()(i, j);
          }
        break;
      case Op::add_bscalar:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          ga->a[i] += g.a[i];
          gb->a[0] += g.a[i];
        }
        break;
      case Op::mul_bscalar:
        for (std::size_t i = 0; i < g.a.size(); ++i) {
          ga->a[i] += g.a[i] * vb->a[0];
          gb->a[0] += g.a[i] * va->a[i];
        }
        break;
      case Op::sum_all:
        for (std::size_t i = 0; i < ga->a.size(); ++i) ga->a[i] += g.a[0];
        break;
      case Op::sum_rows:
        for (int i = 0; i < ga->rows; ++i)
          for (int j = 0; j < ga->cols; ++j) ga->operator()(i, j) += g(i, 0);
        break;
      case Op::sum_cols:
        for (int i = 0; i < ga->rows; ++i)
          for (int j = 0; j < ga->cols; ++j) ga->operator()(i, j) += g(0, j);
        break;
      case Op::transpose_:
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) ga->operator()(j, i) += g(i, j);
        break;
    }
  }
}

}  // namespace diffusion
