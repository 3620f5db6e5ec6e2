#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "zol/errors.hpp"

namespace zol::diff {

// Reverse-mode tape over scalar and dense-vector nodes. Rebuilt per forward
// pass; reset() keeps allocated capacity. Node values live in one arena,
// adjoints in a parallel arena. Weight matrices and biases are referenced in
// place (registered ParamRefs) so large parameters are never copied onto the
// tape; their adjoints accumulate into caller-owned gradient buffers.
//
// A graph is single-threaded; never share one across threads.
class Graph {
 public:
  Graph() = default;

  void reset();

  // --- leaves -------------------------------------------------------------

  int constant(std::span<const double> v);
  int constant(double v);
  // Root parameter carried as a node (copied in; adjoint readable via grad()
  // and also accumulated into `grad_out`).
  int param(std::span<const double> v, std::span<double> grad_out);
  // Registered parameter for in-place ops (matvec / add_bias). Returns a
  // registry id, not a node index.
  int param_ref(std::span<const double> v, std::span<double> grad_out);

  // --- elementwise / reductions -------------------------------------------

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);
  int dot(int a, int b);
  int tanh_(int x);
  int relu(int x);
  int softplus(int x);
  int square(int x);
  int mean(int x);
  int l2_norm(int x);
  // y = radius * x / ||x||_2
  int l2_normalize(int x, double radius);
  int min_const(int x, double c);
  int scale(int x, double c);
  int add_scalar(int x, double c);
  // vector op scalar-node broadcasts
  int div_by_scalar(int v, int s);
  int mul_by_scalar(int v, int s);

  // --- linear algebra -------------------------------------------------------

  // y = W x with W a registered [rows x cols] row-major parameter.
  int matvec(int w_ref, int rows, int cols, int x);
  // y = M x with M constant row-major storage (no gradient to M). The
  // pointer must stay valid until reset(): backward() reads it again.
  int const_matvec(const double* m, int rows, int cols, int x);
  // Moves a transient buffer into graph-owned storage (freed on reset());
  // use for const_matvec payloads that would otherwise go out of scope.
  const double* own_buffer(std::vector<double>&& v);
  int add_bias(int b_ref, int x);
  int add_const_vec(std::span<const double> v, int x);
  // y = [prefix ; x]; gradient flows to x only.
  int concat_cv(std::span<const double> prefix, int x);

  // --- batched (row-major [n x c] matrices stored flat) ---------------------

  // Y[n x r] = X[n x c] * W^T with W a registered [r x c] parameter.
  int matmul_nt(int w_ref, int rows_w, int cols_w, int x, int n);
  // Same with caller-owned constant W (pointer valid until reset()).
  int const_matmul_nt(const double* w, int rows_w, int cols_w, int x, int n);
  // Broadcast-add a parameter / constant bias to each row of X[n x c].
  int add_row_bias(int b_ref, int x, int n);
  int add_row_const(std::span<const double> v, int x, int n);
  // Per-row dot product of two [n x d] nodes -> [n].
  int row_dot(int a, int b, int n);
  // Per-row y_i = radius * x_i / ||x_i||.
  int row_l2_normalize(int x, int n, double radius);
  // [prefix | z] per row: prefix is a constant [n x p] matrix, z a [d] node
  // broadcast to every row. Gradient flows to z as the column-block sum.
  int concat_rows_cv(const double* prefix, int n, int p, int z);
  // Column mean of X[n x d] -> [d].
  int col_mean(int x, int n);
  // || (1/n) X^T X - I ||_F^2 for X[n x d].
  int ortho_penalty_rows(int x, int n, int d);

  // --- variadic -------------------------------------------------------------

  int mean_vecs(std::span<const int> xs);
  int sum_nodes(std::span<const int> xs);
  // || (1/N) sum_i x_i x_i^T - I ||_F^2 over row nodes of dimension `dim`.
  int ortho_penalty(std::span<const int> rows, int dim);

  // --- evaluation -----------------------------------------------------------

  int size(int node) const { return nodes_[node].size; }
  double value(int node) const;                    // ShapeError if not scalar
  std::span<const double> values(int node) const;

  // Reverse accumulation from a scalar loss node. Zeroes all adjoints
  // (including registered parameter gradients) first.
  void backward(int loss);
  std::span<const double> grad(int node) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kConst, kParam, kAdd, kSub, kMul, kDiv, kDot, kTanh, kRelu, kSoftplus,
    kSquare, kMean, kL2Norm, kL2Normalize, kMinConst, kScale, kAddScalar,
    kDivByScalar, kMulByScalar, kMatVec, kConstMatVec, kAddBias, kAddConstVec,
    kConcatCV, kMeanVecs, kSumNodes, kOrthoPenalty,
    kMatMulNT, kConstMatMulNT, kAddRowBias, kAddRowConst, kRowDot,
    kRowL2Normalize, kConcatRowsCV, kColMean, kOrthoPenaltyRows,
  };

  struct ParamRef {
    const double* val;
    double* grad;
    int size;
  };

  struct Node {
    Op op;
    int a = -1, b = -1;       // parents (b doubles as param registry id)
    int off = 0, size = 0;    // span into the value/grad arenas
    int rows = 0, cols = 0;   // matvec shape
    double c0 = 0.0;          // scalar payload
    const double* cptr = nullptr;  // constant matrix/vector payload
    int voff = 0, vcount = 0;      // variadic parent slice
  };

  int push(Op op, int size, int a = -1, int b = -1);
  void check_finite(int node);
  void require_same_size(int a, int b) const;
  std::span<double> val_span(int node);
  std::span<const double> val_span(int node) const;
  std::span<double> grad_span(int node);

  std::vector<Node> nodes_;
  std::vector<ParamRef> params_;
  std::vector<int> varargs_;
  // high-water-mark arenas: reset() rewinds vsize_ without touching capacity,
  // and every op fully overwrites its output span
  std::vector<double> vals_;
  std::vector<double> grads_;
  int vsize_ = 0;
  std::vector<double> scratch_;
  std::vector<std::vector<double>> owned_;
};

// Builds an expression via `build(graph)`, checks the result is a finite
// scalar, and returns (value, node index).
template <class Builder>
std::pair<double, int> eval_scalar(Graph& g, Builder&& build) {
  const int node = build(g);
  if (g.size(node) != 1) {
    throw ShapeError("eval_scalar: expression is not scalar");
  }
  return {g.value(node), node};
}

}  // namespace zol::diff
