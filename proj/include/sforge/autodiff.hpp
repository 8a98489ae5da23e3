#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

#include "sforge/grid_sample.hpp"

namespace sforge::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Lightweight handle to a tape node. Scalars are 1x1 matrices; vectors are
// column matrices.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
};

enum class Op : uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,   // elementwise
  kDiv,   // elementwise
  kNeg,
  kTanh,
  kRelu,
  kExp,
  kLog,
  kSqrt,
  kSin,
  kCos,
  kMin,   // elementwise; ties send gradient to the first argument
  kMax,
  kSum,      // all elements -> 1x1
  kRowSum,   // m x n -> m x 1
  kColSum,   // m x n -> 1 x n
  kMean,     // all elements -> 1x1
  kMatMul,
  kVConcat,      // stack a above b (matching cols)
  kBlock,        // submatrix
  kAffine,       // alpha * x + beta, elementwise constants
  kGridSample,   // elementwise bilinear grid lookup at matching (x, y) matrices
};

// Reverse-mode tape over dense double matrices. The graph is rebuilt for
// every forward evaluation; backward() may be called repeatedly from
// different scalar outputs (adjoints reset each call). Evaluation order is
// fixed by construction, so values and gradients are bit-reproducible.
class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  // Leaves. Constants are excluded from gradient propagation entirely.
  Var input(Mat value, bool requires_grad = true);
  Var constant(Mat value) { return input(std::move(value), false); }
  Var scalar(double value, bool requires_grad = false);

  const Mat& value(Var v) const { return nodes_[static_cast<size_t>(v.idx)].value; }
  double scalar_value(Var v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse sweep from a 1x1 output. Fills adjoints for every node that the
  // output depends on (through gradient-requiring paths).
  void backward(Var output);

  // Adjoint of v from the latest backward(); zeros if v was not reached.
  Mat grad(Var v) const;

  // Operation builders (also exposed as free functions / operators below).
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var tanh_(Var a);
  Var relu_(Var a);
  Var exp_(Var a);
  Var log_(Var a);
  Var sqrt_(Var a);
  Var sin_(Var a);
  Var cos_(Var a);
  Var min_(Var a, Var b);
  Var max_(Var a, Var b);
  Var sum(Var a);
  Var row_sum(Var a);
  Var col_sum(Var a);
  Var mean(Var a);
  Var matmul(Var a, Var b);
  Var vconcat(Var a, Var b);
  Var block(Var a, int r0, int c0, int rows, int cols);
  Var affine(Var a, double alpha, double beta);
  // sdf-style lookup at matching-shape (x, y) coordinate nodes; the grid
  // itself is a constant.
  Var grid_sample(const GridView& grid, Var x, Var y);

 private:
  struct Node {
    Mat value;
    Op op = Op::kLeaf;
    int a = -1;
    int b = -1;
    double alpha = 0.0;
    double beta = 0.0;
    int i0 = 0, i1 = 0, i2 = 0, i3 = 0;  // block geometry
    GridView grid;
    bool needs_grad = false;
  };

  int push(Node node);
  Var make_unary(Op op, Var a, Mat value);
  Var make_binary(Op op, Var a, Var b, Mat value);
  void accumulate(int parent, const Mat& g);
  const Node& node(int i) const { return nodes_[static_cast<size_t>(i)]; }

  std::vector<Node> nodes_;
  std::vector<Mat> adjoint_;
};

// Operator sugar. * is elementwise; use matmul()/matvec() for products.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);

inline Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var matvec(Var m, Var v) { return m.tape->matmul(m, v); }
inline Var tanh(Var a) { return a.tape->tanh_(a); }
inline Var relu(Var a) { return a.tape->relu_(a); }
inline Var exp(Var a) { return a.tape->exp_(a); }
inline Var log(Var a) { return a.tape->log_(a); }
inline Var sqrt(Var a) { return a.tape->sqrt_(a); }
inline Var sin(Var a) { return a.tape->sin_(a); }
inline Var cos(Var a) { return a.tape->cos_(a); }
inline Var min(Var a, Var b) { return a.tape->min_(a, b); }
inline Var max(Var a, Var b) { return a.tape->max_(a, b); }
inline Var sum(Var a) { return a.tape->sum(a); }
inline Var row_sum(Var a) { return a.tape->row_sum(a); }
inline Var col_sum(Var a) { return a.tape->col_sum(a); }
inline Var mean(Var a) { return a.tape->mean(a); }
inline Var vconcat(Var a, Var b) { return a.tape->vconcat(a, b); }
Var vconcat(std::initializer_list<Var> parts);
inline Var block(Var a, int r0, int c0, int rows, int cols) {
  return a.tape->block(a, r0, c0, rows, cols);
}
// Numerically stable logistic built from primitives.
inline Var sigmoid(Var a) { return 0.5 * tanh(a * 0.5) + 0.5; }

// Central-difference oracle. Rebuilds the graph via `build` around `point`
// (one leaf per entry), compares backward() against central differences with
// step h, and reports the max relative error over comparable coordinates.
// Coordinates where one-sided slopes disagree (a kink within h) are excluded
// from comparison and counted separately.
struct FdReport {
  double max_rel_err = 0.0;
  int compared = 0;
  int excluded = 0;
};
FdReport finite_diff_check(
    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
    const std::vector<Mat>& point, double h);

}  // namespace sforge::ad
