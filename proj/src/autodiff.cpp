#include "sforge/autodiff.hpp"

#include <cmath>

#include "sforge/errors.hpp"

namespace sforge::ad {

namespace {

using Arr = Eigen::ArrayXXd;

bool same_shape(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

bool is_scalar(const Mat& m) { return m.rows() == 1 && m.cols() == 1; }

// Applies f elementwise with 1x1-to-matrix broadcast on either side.
template <class F>
Mat apply_binary(const Mat& a, const Mat& b, F f, const char* opname) {
  if (same_shape(a, b)) return f(a.array(), b.array()).matrix();
  if (is_scalar(a))
    return f(Arr::Constant(b.rows(), b.cols(), a(0, 0)), b.array()).matrix();
  if (is_scalar(b))
    return f(a.array(), Arr::Constant(a.rows(), a.cols(), b(0, 0))).matrix();
  throw ValidationError(std::string(opname) + ": shape mismatch");
}

// Gradient contribution reshaped for a possibly-broadcast parent.
Mat reduce_to(const Mat& g, const Mat& parent_value) {
  if (same_shape(g, parent_value)) return g;
  if (is_scalar(parent_value)) {
    Mat out(1, 1);
    out(0, 0) = g.sum();
    return out;
  }
  throw ValidationError("autodiff: internal gradient shape mismatch");
}

Mat broadcast_like(const Mat& m, const Mat& shape) {
  if (same_shape(m, shape)) return m;
  return Mat::Constant(shape.rows(), shape.cols(), m(0, 0));
}

}  // namespace

int Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::input(Mat value, bool requires_grad) {
  if (value.size() == 0) throw ValidationError("autodiff: empty matrix leaf");
  Node n;
  n.value = std::move(value);
  n.op = Op::kLeaf;
  n.needs_grad = requires_grad;
  return Var{this, push(std::move(n))};
}

Var Tape::scalar(double value, bool requires_grad) {
  Mat m(1, 1);
  m(0, 0) = value;
  return input(std::move(m), requires_grad);
}

double Tape::scalar_value(Var v) const {
  const Mat& m = value(v);
  if (!is_scalar(m)) throw ValidationError("autodiff: expected 1x1 value");
  return m(0, 0);
}

Var Tape::make_unary(Op op, Var a, Mat value) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.a = a.idx;
  n.needs_grad = node(a.idx).needs_grad;
  return Var{this, push(std::move(n))};
}

Var Tape::make_binary(Op op, Var a, Var b, Mat value) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.a = a.idx;
  n.b = b.idx;
  n.needs_grad = node(a.idx).needs_grad || node(b.idx).needs_grad;
  return Var{this, push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
  return make_binary(Op::kAdd, a, b,
                     apply_binary(value(a), value(b), [](auto x, auto y) { return x + y; }, "add"));
}

Var Tape::sub(Var a, Var b) {
  return make_binary(Op::kSub, a, b,
                     apply_binary(value(a), value(b), [](auto x, auto y) { return x - y; }, "sub"));
}

Var Tape::mul(Var a, Var b) {
  return make_binary(Op::kMul, a, b,
                     apply_binary(value(a), value(b), [](auto x, auto y) { return x * y; }, "mul"));
}

Var Tape::div(Var a, Var b) {
  return make_binary(Op::kDiv, a, b,
                     apply_binary(value(a), value(b), [](auto x, auto y) { return x / y; }, "div"));
}

Var Tape::neg(Var a) { return make_unary(Op::kNeg, a, -value(a)); }

Var Tape::tanh_(Var a) { return make_unary(Op::kTanh, a, value(a).array().tanh().matrix()); }

Var Tape::relu_(Var a) { return make_unary(Op::kRelu, a, value(a).cwiseMax(0.0)); }

Var Tape::exp_(Var a) { return make_unary(Op::kExp, a, value(a).array().exp().matrix()); }

Var Tape::log_(Var a) {
  if ((value(a).array() <= 0.0).any())
    throw ValidationError("log: non-positive input");
  return make_unary(Op::kLog, a, value(a).array().log().matrix());
}

Var Tape::sqrt_(Var a) {
  if ((value(a).array() < 0.0).any()) throw ValidationError("sqrt: negative input");
  return make_unary(Op::kSqrt, a, value(a).array().sqrt().matrix());
}

Var Tape::sin_(Var a) { return make_unary(Op::kSin, a, value(a).array().sin().matrix()); }

Var Tape::cos_(Var a) { return make_unary(Op::kCos, a, value(a).array().cos().matrix()); }

Var Tape::min_(Var a, Var b) {
  return make_binary(Op::kMin, a, b,
                     apply_binary(value(a), value(b), [](auto x, auto y) { return x.min(y); }, "min"));
}

Var Tape::max_(Var a, Var b) {
  return make_binary(Op::kMax, a, b,
                     apply_binary(value(a), value(b), [](auto x, auto y) { return x.max(y); }, "max"));
}

Var Tape::sum(Var a) {
  Mat m(1, 1);
  m(0, 0) = value(a).sum();
  return make_unary(Op::kSum, a, std::move(m));
}

Var Tape::row_sum(Var a) { return make_unary(Op::kRowSum, a, value(a).rowwise().sum()); }

Var Tape::col_sum(Var a) { return make_unary(Op::kColSum, a, value(a).colwise().sum()); }

Var Tape::mean(Var a) {
  Mat m(1, 1);
  m(0, 0) = value(a).mean();
  return make_unary(Op::kMean, a, std::move(m));
}

Var Tape::matmul(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols() != bv.rows()) throw ValidationError("matmul: inner dimension mismatch");
  return make_binary(Op::kMatMul, a, b, av * bv);
}

Var Tape::vconcat(Var a, Var b) {
  const Mat& av = value(a);
  const Mat& bv = value(b);
  if (av.cols() != bv.cols()) throw ValidationError("vconcat: column count mismatch");
  Mat m(av.rows() + bv.rows(), av.cols());
  m.topRows(av.rows()) = av;
  m.bottomRows(bv.rows()) = bv;
  return make_binary(Op::kVConcat, a, b, std::move(m));
}

Var Tape::block(Var a, int r0, int c0, int rows, int cols) {
  const Mat& av = value(a);
  if (r0 < 0 || c0 < 0 || rows <= 0 || cols <= 0 || r0 + rows > av.rows() ||
      c0 + cols > av.cols())
    throw ValidationError("block: out of range");
  Var v = make_unary(Op::kBlock, a, av.block(r0, c0, rows, cols));
  Node& n = nodes_[static_cast<size_t>(v.idx)];
  n.i0 = r0;
  n.i1 = c0;
  n.i2 = rows;
  n.i3 = cols;
  return v;
}

Var Tape::affine(Var a, double alpha, double beta) {
  Var v = make_unary(Op::kAffine, a, (alpha * value(a).array() + beta).matrix());
  Node& n = nodes_[static_cast<size_t>(v.idx)];
  n.alpha = alpha;
  n.beta = beta;
  return v;
}

Var Tape::grid_sample(const GridView& grid, Var x, Var y) {
  if (grid.data == nullptr || grid.rows < 2 || grid.cols < 2)
    throw ValidationError("grid_sample: grid must be at least 2x2");
  const Mat& xv = value(x);
  const Mat& yv = value(y);
  if (xv.rows() != yv.rows() || xv.cols() != yv.cols())
    throw ValidationError("grid_sample: coordinate shapes must match");
  Mat m(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i)
    for (Eigen::Index j = 0; j < xv.cols(); ++j) m(i, j) = bilinear_sample(grid, xv(i, j), yv(i, j));
  Var v = make_binary(Op::kGridSample, x, y, std::move(m));
  nodes_[static_cast<size_t>(v.idx)].grid = grid;
  return v;
}

void Tape::accumulate(int parent, const Mat& g) {
  if (parent < 0) return;
  if (!nodes_[static_cast<size_t>(parent)].needs_grad) return;
  Mat& adj = adjoint_[static_cast<size_t>(parent)];
  if (adj.size() == 0) {
    adj = g;
  } else {
    adj += g;
  }
}

void Tape::backward(Var output) {
  if (output.tape != this) throw ValidationError("backward: foreign variable");
  const Mat& out_v = value(output);
  if (!is_scalar(out_v)) throw ValidationError("backward: output must be 1x1");

  adjoint_.assign(nodes_.size(), Mat());
  if (!node(output.idx).needs_grad) return;  // constant function of the leaves
  adjoint_[static_cast<size_t>(output.idx)] = Mat::Ones(1, 1);

  for (int i = output.idx; i >= 0; --i) {
    const Node& n = nodes_[static_cast<size_t>(i)];
    const Mat& g = adjoint_[static_cast<size_t>(i)];
    if (g.size() == 0 || !n.needs_grad) continue;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        accumulate(n.a, reduce_to(g, node(n.a).value));
        accumulate(n.b, reduce_to(g, node(n.b).value));
        break;
      case Op::kSub:
        accumulate(n.a, reduce_to(g, node(n.a).value));
        accumulate(n.b, reduce_to(-g, node(n.b).value));
        break;
      case Op::kMul: {
        const Mat A = broadcast_like(node(n.a).value, n.value);
        const Mat B = broadcast_like(node(n.b).value, n.value);
        accumulate(n.a, reduce_to((g.array() * B.array()).matrix(), node(n.a).value));
        accumulate(n.b, reduce_to((g.array() * A.array()).matrix(), node(n.b).value));
        break;
      }
      case Op::kDiv: {
        const Mat B = broadcast_like(node(n.b).value, n.value);
        accumulate(n.a, reduce_to((g.array() / B.array()).matrix(), node(n.a).value));
        accumulate(n.b, reduce_to((-g.array() * n.value.array() / B.array()).matrix(),
                                  node(n.b).value));
        break;
      }
      case Op::kNeg:
        accumulate(n.a, -g);
        break;
      case Op::kTanh:
        accumulate(n.a, (g.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case Op::kRelu:
        // Strict comparison: zero sub-gradient at the kink.
        accumulate(n.a,
                   (g.array() * (node(n.a).value.array() > 0.0).cast<double>()).matrix());
        break;
      case Op::kExp:
        accumulate(n.a, (g.array() * n.value.array()).matrix());
        break;
      case Op::kLog:
        accumulate(n.a, (g.array() / node(n.a).value.array()).matrix());
        break;
      case Op::kSqrt:
        accumulate(n.a, (g.array() * 0.5 / n.value.array()).matrix());
        break;
      case Op::kSin:
        accumulate(n.a, (g.array() * node(n.a).value.array().cos()).matrix());
        break;
      case Op::kCos:
        accumulate(n.a, (-g.array() * node(n.a).value.array().sin()).matrix());
        break;
      case Op::kMin: {
        const Mat A = broadcast_like(node(n.a).value, n.value);
        const Mat B = broadcast_like(node(n.b).value, n.value);
        // Ties send the gradient to the first argument.
        accumulate(n.a, reduce_to((g.array() * (A.array() <= B.array()).cast<double>()).matrix(),
                                  node(n.a).value));
        accumulate(n.b, reduce_to((g.array() * (B.array() < A.array()).cast<double>()).matrix(),
                                  node(n.b).value));
        break;
      }
      case Op::kMax: {
        const Mat A = broadcast_like(node(n.a).value, n.value);
        const Mat B = broadcast_like(node(n.b).value, n.value);
        accumulate(n.a, reduce_to((g.array() * (A.array() >= B.array()).cast<double>()).matrix(),
                                  node(n.a).value));
        accumulate(n.b, reduce_to((g.array() * (B.array() > A.array()).cast<double>()).matrix(),
                                  node(n.b).value));
        break;
      }
      case Op::kSum:
        accumulate(n.a, Mat::Constant(node(n.a).value.rows(), node(n.a).value.cols(), g(0, 0)));
        break;
      case Op::kRowSum:
        accumulate(n.a, g.replicate(1, node(n.a).value.cols()));
        break;
      case Op::kColSum:
        accumulate(n.a, g.replicate(node(n.a).value.rows(), 1));
        break;
      case Op::kMean:
        accumulate(n.a, Mat::Constant(node(n.a).value.rows(), node(n.a).value.cols(),
                                      g(0, 0) / static_cast<double>(node(n.a).value.size())));
        break;
      case Op::kMatMul: {
        const Mat& A = node(n.a).value;
        const Mat& B = node(n.b).value;
        if (node(n.a).needs_grad) accumulate(n.a, g * B.transpose());
        if (node(n.b).needs_grad) accumulate(n.b, A.transpose() * g);
        break;
      }
      case Op::kVConcat: {
        const auto top_rows = node(n.a).value.rows();
        accumulate(n.a, g.topRows(top_rows));
        accumulate(n.b, g.bottomRows(g.rows() - top_rows));
        break;
      }
      case Op::kBlock: {
        Mat full = Mat::Zero(node(n.a).value.rows(), node(n.a).value.cols());
        full.block(n.i0, n.i1, n.i2, n.i3) = g;
        accumulate(n.a, full);
        break;
      }
      case Op::kAffine:
        accumulate(n.a, n.alpha * g);
        break;
      case Op::kGridSample: {
        const Mat& xv = node(n.a).value;
        const Mat& yv = node(n.b).value;
        Mat mx(xv.rows(), xv.cols()), my(xv.rows(), xv.cols());
        for (Eigen::Index r = 0; r < xv.rows(); ++r) {
          for (Eigen::Index c2 = 0; c2 < xv.cols(); ++c2) {
            double gx = 0.0, gy = 0.0;
            bilinear_sample(n.grid, xv(r, c2), yv(r, c2), &gx, &gy);
            mx(r, c2) = g(r, c2) * gx;
            my(r, c2) = g(r, c2) * gy;
          }
        }
        accumulate(n.a, mx);
        accumulate(n.b, my);
        break;
      }
    }
  }
}

Mat Tape::grad(Var v) const {
  if (v.tape != this) throw ValidationError("grad: foreign variable");
  if (static_cast<size_t>(v.idx) < adjoint_.size() &&
      adjoint_[static_cast<size_t>(v.idx)].size() != 0)
    return adjoint_[static_cast<size_t>(v.idx)];
  const Mat& val = value(v);
  return Mat::Zero(val.rows(), val.cols());
}

Var operator+(Var a, Var b) { return a.tape->add(a, b); }
Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
Var operator/(Var a, Var b) { return a.tape->div(a, b); }
Var operator-(Var a) { return a.tape->neg(a); }
Var operator+(Var a, double c) { return a.tape->affine(a, 1.0, c); }
Var operator+(double c, Var a) { return a.tape->affine(a, 1.0, c); }
Var operator-(Var a, double c) { return a.tape->affine(a, 1.0, -c); }
Var operator-(double c, Var a) { return a.tape->affine(a, -1.0, c); }
Var operator*(Var a, double c) { return a.tape->affine(a, c, 0.0); }
Var operator*(double c, Var a) { return a.tape->affine(a, c, 0.0); }
Var operator/(Var a, double c) { return a.tape->affine(a, 1.0 / c, 0.0); }

Var vconcat(std::initializer_list<Var> parts) {
  if (parts.size() == 0) throw ValidationError("vconcat: empty list");
  auto it = parts.begin();
  Var acc = *it;
  for (++it; it != parts.end(); ++it) acc = vconcat(acc, *it);
  return acc;
}

FdReport finite_diff_check(
    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
    const std::vector<Mat>& point, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_diff_check: h must be positive");

  // Analytic pass.
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Mat& m : point) leaves.push_back(tape.input(m, true));
  const Var out = build(tape, leaves);
  const double f0 = tape.scalar_value(out);
  tape.backward(out);
  std::vector<Mat> analytic;
  analytic.reserve(leaves.size());
  for (const Var& v : leaves) analytic.push_back(tape.grad(v));

  auto eval = [&](const std::vector<Mat>& p) {
    Tape t;
    std::vector<Var> ls;
    ls.reserve(p.size());
    for (const Mat& m : p) ls.push_back(t.constant(m));
    return t.scalar_value(build(t, ls));
  };

  FdReport report;
  std::vector<Mat> probe = point;
  for (size_t k = 0; k < point.size(); ++k) {
    for (Eigen::Index i = 0; i < point[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < point[k].cols(); ++j) {
        const double saved = probe[k](i, j);
        probe[k](i, j) = saved + h;
        const double fp = eval(probe);
        probe[k](i, j) = saved - h;
        const double fm = eval(probe);
        probe[k](i, j) = saved;

        const double d_plus = (fp - f0) / h;
        const double d_minus = (f0 - fm) / h;
        // One-sided slopes disagreeing by a non-vanishing amount indicate a
        // kink within h of the point; such coordinates are not comparable.
        if (std::abs(d_plus - d_minus) >
            1e-3 * (std::abs(d_plus) + std::abs(d_minus) + 1.0)) {
          ++report.excluded;
          continue;
        }
        const double central = (fp - fm) / (2.0 * h);
        const double a = analytic[k](i, j);
        const double denom = std::max({std::abs(a), std::abs(central), 1e-8});
        const double rel = std::abs(a - central) / denom;
        report.max_rel_err = std::max(report.max_rel_err, rel);
        ++report.compared;
      }
    }
  }
  return report;
}

}  // namespace sforge::ad
