#include "zol/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace zol::diff {

namespace {

using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus_stable(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

void Graph::reset() {
  nodes_.clear();
  params_.clear();
  varargs_.clear();
  vsize_ = 0;
  owned_.clear();
}

const double* Graph::own_buffer(std::vector<double>&& v) {
  owned_.push_back(std::move(v));
  return owned_.back().data();
}

int Graph::push(Op op, int size, int a, int b) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.off = vsize_;
  n.size = size;
  vsize_ += size;
  if (static_cast<int>(vals_.size()) < vsize_) vals_.resize(vsize_);
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

std::span<double> Graph::val_span(int node) {
  const Node& n = nodes_[node];
  return {vals_.data() + n.off, static_cast<std::size_t>(n.size)};
}

std::span<const double> Graph::val_span(int node) const {
  const Node& n = nodes_[node];
  return {vals_.data() + n.off, static_cast<std::size_t>(n.size)};
}

std::span<double> Graph::grad_span(int node) {
  const Node& n = nodes_[node];
  return {grads_.data() + n.off, static_cast<std::size_t>(n.size)};
}

void Graph::check_finite(int node) {
  for (double v : val_span(node)) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite intermediate value in graph node " +
                         std::to_string(node));
    }
  }
}

void Graph::require_same_size(int a, int b) const {
  if (nodes_[a].size != nodes_[b].size) {
    throw ShapeError("operand sizes differ: " + std::to_string(nodes_[a].size) +
                     " vs " + std::to_string(nodes_[b].size));
  }
}

int Graph::constant(std::span<const double> v) {
  const int id = push(Op::kConst, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), val_span(id).begin());
  check_finite(id);
  return id;
}

int Graph::constant(double v) { return constant(std::span<const double>(&v, 1)); }

int Graph::param(std::span<const double> v, std::span<double> grad_out) {
  if (v.size() != grad_out.size()) {
    throw ShapeError("param value/grad size mismatch");
  }
  const int pid = param_ref(v, grad_out);
  const int id = push(Op::kParam, static_cast<int>(v.size()), -1, pid);
  std::copy(v.begin(), v.end(), val_span(id).begin());
  check_finite(id);
  return id;
}

int Graph::param_ref(std::span<const double> v, std::span<double> grad_out) {
  params_.push_back(ParamRef{v.data(), grad_out.data(), static_cast<int>(v.size())});
  return static_cast<int>(params_.size()) - 1;
}

int Graph::add(int a, int b) {
  require_same_size(a, b);
  const int id = push(Op::kAdd, nodes_[a].size, a, b);
  auto out = val_span(id);
  auto va = val_span(a), vb = val_span(b);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = va[i] + vb[i];
  check_finite(id);
  return id;
}

int Graph::sub(int a, int b) {
  require_same_size(a, b);
  const int id = push(Op::kSub, nodes_[a].size, a, b);
  auto out = val_span(id);
  auto va = val_span(a), vb = val_span(b);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = va[i] - vb[i];
  check_finite(id);
  return id;
}

int Graph::mul(int a, int b) {
  require_same_size(a, b);
  const int id = push(Op::kMul, nodes_[a].size, a, b);
  auto out = val_span(id);
  auto va = val_span(a), vb = val_span(b);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = va[i] * vb[i];
  check_finite(id);
  return id;
}

int Graph::div(int a, int b) {
  require_same_size(a, b);
  for (double d : val_span(b)) {
    if (d == 0.0) throw NumericError("division by zero");
  }
  const int id = push(Op::kDiv, nodes_[a].size, a, b);
  auto out = val_span(id);
  auto va = val_span(a), vb = val_span(b);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = va[i] / vb[i];
  check_finite(id);
  return id;
}

int Graph::dot(int a, int b) {
  require_same_size(a, b);
  const int id = push(Op::kDot, 1, a, b);
  auto va = val_span(a), vb = val_span(b);
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  val_span(id)[0] = s;
  check_finite(id);
  return id;
}

int Graph::tanh_(int x) {
  const int id = push(Op::kTanh, nodes_[x].size, x);
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = std::tanh(vx[i]);
  check_finite(id);
  return id;
}

int Graph::relu(int x) {
  const int id = push(Op::kRelu, nodes_[x].size, x);
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = vx[i] > 0.0 ? vx[i] : 0.0;
  check_finite(id);
  return id;
}

int Graph::softplus(int x) {
  const int id = push(Op::kSoftplus, nodes_[x].size, x);
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = softplus_stable(vx[i]);
  check_finite(id);
  return id;
}

int Graph::square(int x) {
  const int id = push(Op::kSquare, nodes_[x].size, x);
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = vx[i] * vx[i];
  check_finite(id);
  return id;
}

int Graph::mean(int x) {
  const int id = push(Op::kMean, 1, x);
  auto vx = val_span(x);
  double s = 0.0;
  for (double v : vx) s += v;
  val_span(id)[0] = s / static_cast<double>(vx.size());
  check_finite(id);
  return id;
}

int Graph::l2_norm(int x) {
  const int id = push(Op::kL2Norm, 1, x);
  auto vx = val_span(x);
  double s = 0.0;
  for (double v : vx) s += v * v;
  val_span(id)[0] = std::sqrt(s);
  check_finite(id);
  return id;
}

int Graph::l2_normalize(int x, double radius) {
  auto vx = val_span(x);
  double s = 0.0;
  for (double v : vx) s += v * v;
  const double norm = std::sqrt(s);
  if (norm == 0.0) throw NumericError("l2_normalize of a zero vector");
  const int id = push(Op::kL2Normalize, nodes_[x].size, x);
  nodes_[id].c0 = radius;
  auto out = val_span(id);
  vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = radius * vx[i] / norm;
  check_finite(id);
  return id;
}

int Graph::min_const(int x, double c) {
  const int id = push(Op::kMinConst, nodes_[x].size, x);
  nodes_[id].c0 = c;
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = std::min(vx[i], c);
  check_finite(id);
  return id;
}

int Graph::scale(int x, double c) {
  const int id = push(Op::kScale, nodes_[x].size, x);
  nodes_[id].c0 = c;
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = c * vx[i];
  check_finite(id);
  return id;
}

int Graph::add_scalar(int x, double c) {
  const int id = push(Op::kAddScalar, nodes_[x].size, x);
  nodes_[id].c0 = c;
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = vx[i] + c;
  check_finite(id);
  return id;
}

int Graph::div_by_scalar(int v, int s) {
  if (nodes_[s].size != 1) throw ShapeError("div_by_scalar: divisor not scalar");
  const double d = val_span(s)[0];
  if (d == 0.0) throw NumericError("division by zero");
  const int id = push(Op::kDivByScalar, nodes_[v].size, v, s);
  auto out = val_span(id);
  auto vv = val_span(v);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = vv[i] / d;
  check_finite(id);
  return id;
}

int Graph::mul_by_scalar(int v, int s) {
  if (nodes_[s].size != 1) throw ShapeError("mul_by_scalar: factor not scalar");
  const double d = val_span(s)[0];
  const int id = push(Op::kMulByScalar, nodes_[v].size, v, s);
  auto out = val_span(id);
  auto vv = val_span(v);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = vv[i] * d;
  check_finite(id);
  return id;
}

int Graph::matvec(int w_ref, int rows, int cols, int x) {
  const ParamRef& p = params_[w_ref];
  if (p.size != rows * cols) throw ShapeError("matvec: parameter size mismatch");
  if (nodes_[x].size != cols) throw ShapeError("matvec: input size mismatch");
  const int id = push(Op::kMatVec, rows, x, w_ref);
  nodes_[id].rows = rows;
  nodes_[id].cols = cols;
  auto out = val_span(id);
  auto vx = val_span(x);
  MapVec(out.data(), rows).noalias() =
      CMapMat(p.val, rows, cols) * CMapVec(vx.data(), cols);
  check_finite(id);
  return id;
}

int Graph::const_matvec(const double* m, int rows, int cols, int x) {
  if (nodes_[x].size != cols) throw ShapeError("const_matvec: input size mismatch");
  const int id = push(Op::kConstMatVec, rows, x);
  nodes_[id].rows = rows;
  nodes_[id].cols = cols;
  nodes_[id].cptr = m;
  auto out = val_span(id);
  auto vx = val_span(x);
  MapVec(out.data(), rows).noalias() =
      CMapMat(m, rows, cols) * CMapVec(vx.data(), cols);
  check_finite(id);
  return id;
}

int Graph::add_bias(int b_ref, int x) {
  const ParamRef& p = params_[b_ref];
  if (p.size != nodes_[x].size) throw ShapeError("add_bias: size mismatch");
  const int id = push(Op::kAddBias, nodes_[x].size, x, b_ref);
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = vx[i] + p.val[i];
  check_finite(id);
  return id;
}

int Graph::add_const_vec(std::span<const double> v, int x) {
  if (static_cast<int>(v.size()) != nodes_[x].size) {
    throw ShapeError("add_const_vec: size mismatch");
  }
  const int id = push(Op::kAddConstVec, nodes_[x].size, x);
  nodes_[id].cptr = v.data();
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < nodes_[id].size; ++i) out[i] = vx[i] + v[i];
  check_finite(id);
  return id;
}

int Graph::concat_cv(std::span<const double> prefix, int x) {
  const int n = static_cast<int>(prefix.size()) + nodes_[x].size;
  const int id = push(Op::kConcatCV, n, x);
  nodes_[id].rows = static_cast<int>(prefix.size());
  auto out = val_span(id);
  std::copy(prefix.begin(), prefix.end(), out.begin());
  auto vx = val_span(x);
  std::copy(vx.begin(), vx.end(), out.begin() + prefix.size());
  check_finite(id);
  return id;
}

int Graph::matmul_nt(int w_ref, int rows_w, int cols_w, int x, int n) {
  const ParamRef& p = params_[w_ref];
  if (p.size != rows_w * cols_w) throw ShapeError("matmul_nt: parameter size mismatch");
  if (nodes_[x].size != n * cols_w) throw ShapeError("matmul_nt: input size mismatch");
  const int id = push(Op::kMatMulNT, n * rows_w, x, w_ref);
  nodes_[id].rows = rows_w;
  nodes_[id].cols = cols_w;
  MapMat(val_span(id).data(), n, rows_w).noalias() =
      CMapMat(val_span(x).data(), n, cols_w) * CMapMat(p.val, rows_w, cols_w).transpose();
  check_finite(id);
  return id;
}

int Graph::const_matmul_nt(const double* w, int rows_w, int cols_w, int x, int n) {
  if (nodes_[x].size != n * cols_w) throw ShapeError("const_matmul_nt: input size mismatch");
  const int id = push(Op::kConstMatMulNT, n * rows_w, x);
  nodes_[id].rows = rows_w;
  nodes_[id].cols = cols_w;
  nodes_[id].cptr = w;
  MapMat(val_span(id).data(), n, rows_w).noalias() =
      CMapMat(val_span(x).data(), n, cols_w) * CMapMat(w, rows_w, cols_w).transpose();
  check_finite(id);
  return id;
}

int Graph::add_row_bias(int b_ref, int x, int n) {
  const ParamRef& p = params_[b_ref];
  if (nodes_[x].size != n * p.size) throw ShapeError("add_row_bias: size mismatch");
  const int id = push(Op::kAddRowBias, nodes_[x].size, x, b_ref);
  nodes_[id].rows = p.size;
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < p.size; ++k) out[i * p.size + k] = vx[i * p.size + k] + p.val[k];
  }
  check_finite(id);
  return id;
}

int Graph::add_row_const(std::span<const double> v, int x, int n) {
  const int c = static_cast<int>(v.size());
  if (nodes_[x].size != n * c) throw ShapeError("add_row_const: size mismatch");
  const int id = push(Op::kAddRowConst, nodes_[x].size, x);
  nodes_[id].rows = c;
  nodes_[id].cptr = v.data();
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < c; ++k) out[i * c + k] = vx[i * c + k] + v[k];
  }
  check_finite(id);
  return id;
}

int Graph::row_dot(int a, int b, int n) {
  require_same_size(a, b);
  if (nodes_[a].size % n != 0) throw ShapeError("row_dot: size not divisible by n");
  const int d = nodes_[a].size / n;
  const int id = push(Op::kRowDot, n, a, b);
  nodes_[id].rows = d;
  auto out = val_span(id);
  auto va = val_span(a), vb = val_span(b);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += va[i * d + k] * vb[i * d + k];
    out[i] = s;
  }
  check_finite(id);
  return id;
}

int Graph::row_l2_normalize(int x, int n, double radius) {
  if (nodes_[x].size % n != 0) throw ShapeError("row_l2_normalize: size not divisible by n");
  const int d = nodes_[x].size / n;
  {
    auto vx = val_span(x);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += vx[i * d + k] * vx[i * d + k];
      if (s == 0.0) throw NumericError("row_l2_normalize of a zero row");
    }
  }
  const int id = push(Op::kRowL2Normalize, nodes_[x].size, x);
  nodes_[id].rows = d;
  nodes_[id].c0 = radius;
  auto out = val_span(id);
  auto vx = val_span(x);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += vx[i * d + k] * vx[i * d + k];
    const double k2 = radius / std::sqrt(s);
    for (int k = 0; k < d; ++k) out[i * d + k] = k2 * vx[i * d + k];
  }
  check_finite(id);
  return id;
}

int Graph::concat_rows_cv(const double* prefix, int n, int p, int z) {
  const int d = nodes_[z].size;
  const int id = push(Op::kConcatRowsCV, n * (p + d), z);
  nodes_[id].rows = p;
  nodes_[id].cols = d;
  nodes_[id].cptr = prefix;
  auto out = val_span(id);
  auto vz = val_span(z);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < p; ++k) out[i * (p + d) + k] = prefix[i * p + k];
    for (int k = 0; k < d; ++k) out[i * (p + d) + p + k] = vz[k];
  }
  check_finite(id);
  return id;
}

int Graph::col_mean(int x, int n) {
  if (nodes_[x].size % n != 0) throw ShapeError("col_mean: size not divisible by n");
  const int d = nodes_[x].size / n;
  const int id = push(Op::kColMean, d, x);
  nodes_[id].rows = n;
  auto out = val_span(id);
  auto vx = val_span(x);
  std::fill(out.begin(), out.end(), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) out[k] += vx[i * d + k];
  }
  const double inv = 1.0 / n;
  for (int k = 0; k < d; ++k) out[k] *= inv;
  check_finite(id);
  return id;
}

int Graph::ortho_penalty_rows(int x, int n, int d) {
  if (nodes_[x].size != n * d) throw ShapeError("ortho_penalty_rows: size mismatch");
  const int id = push(Op::kOrthoPenaltyRows, 1, x);
  nodes_[id].rows = n;
  nodes_[id].cols = d;
  scratch_.assign(static_cast<std::size_t>(d) * d, 0.0);
  MapMat c(scratch_.data(), d, d);
  CMapMat xm(val_span(x).data(), n, d);
  c.noalias() = xm.transpose() * xm / static_cast<double>(n);
  c -= RowMat::Identity(d, d);
  val_span(id)[0] = c.squaredNorm();
  check_finite(id);
  return id;
}

int Graph::mean_vecs(std::span<const int> xs) {
  if (xs.empty()) throw ShapeError("mean_vecs: empty parent list");
  const int sz = nodes_[xs[0]].size;
  for (int x : xs) {
    if (nodes_[x].size != sz) throw ShapeError("mean_vecs: size mismatch");
  }
  const int voff = static_cast<int>(varargs_.size());
  varargs_.insert(varargs_.end(), xs.begin(), xs.end());
  const int id = push(Op::kMeanVecs, sz);
  nodes_[id].voff = voff;
  nodes_[id].vcount = static_cast<int>(xs.size());
  auto out = val_span(id);
  std::fill(out.begin(), out.end(), 0.0);
  for (int x : xs) {
    auto vx = val_span(x);
    for (int i = 0; i < sz; ++i) out[i] += vx[i];
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (int i = 0; i < sz; ++i) out[i] *= inv;
  check_finite(id);
  return id;
}

int Graph::sum_nodes(std::span<const int> xs) {
  if (xs.empty()) throw ShapeError("sum_nodes: empty parent list");
  const int sz = nodes_[xs[0]].size;
  for (int x : xs) {
    if (nodes_[x].size != sz) throw ShapeError("sum_nodes: size mismatch");
  }
  const int voff = static_cast<int>(varargs_.size());
  varargs_.insert(varargs_.end(), xs.begin(), xs.end());
  const int id = push(Op::kSumNodes, sz);
  nodes_[id].voff = voff;
  nodes_[id].vcount = static_cast<int>(xs.size());
  auto out = val_span(id);
  std::fill(out.begin(), out.end(), 0.0);
  for (int x : xs) {
    auto vx = val_span(x);
    for (int i = 0; i < sz; ++i) out[i] += vx[i];
  }
  check_finite(id);
  return id;
}

int Graph::ortho_penalty(std::span<const int> rows, int dim) {
  if (rows.empty()) throw ShapeError("ortho_penalty: empty parent list");
  for (int x : rows) {
    if (nodes_[x].size != dim) throw ShapeError("ortho_penalty: row size mismatch");
  }
  const int voff = static_cast<int>(varargs_.size());
  varargs_.insert(varargs_.end(), rows.begin(), rows.end());
  const int id = push(Op::kOrthoPenalty, 1);
  nodes_[id].voff = voff;
  nodes_[id].vcount = static_cast<int>(rows.size());
  nodes_[id].rows = dim;

  scratch_.assign(static_cast<std::size_t>(dim) * dim, 0.0);
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (int x : rows) {
    auto vx = val_span(x);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) scratch_[i * dim + j] += vx[i] * vx[j];
    }
  }
  double f = 0.0;
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      const double c = scratch_[i * dim + j] * inv - (i == j ? 1.0 : 0.0);
      f += c * c;
    }
  }
  val_span(id)[0] = f;
  check_finite(id);
  return id;
}

double Graph::value(int node) const {
  if (nodes_[node].size != 1) throw ShapeError("value(): node is not scalar");
  return val_span(node)[0];
}

std::span<const double> Graph::values(int node) const { return val_span(node); }

std::span<const double> Graph::grad(int node) const {
  const Node& n = nodes_[node];
  return {grads_.data() + n.off, static_cast<std::size_t>(n.size)};
}

void Graph::backward(int loss) {
  if (nodes_[loss].size != 1) {
    throw ShapeError("backward: loss node is not scalar");
  }
  if (static_cast<int>(grads_.size()) < vsize_) grads_.resize(vsize_);
  std::fill(grads_.begin(), grads_.begin() + vsize_, 0.0);
  for (const ParamRef& p : params_) {
    std::fill(p.grad, p.grad + p.size, 0.0);
  }
  grad_span(loss)[0] = 1.0;

  for (int id = loss; id >= 0; --id) {
    const Node& n = nodes_[id];
    auto g = grad_span(id);
    bool any = false;
    for (double v : g) {
      if (v != 0.0) { any = true; break; }
    }
    if (!any) continue;

    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam: {
        const ParamRef& p = params_[n.b];
        for (int i = 0; i < n.size; ++i) p.grad[i] += g[i];
        break;
      }
      case Op::kAdd: {
        auto ga = grad_span(n.a), gb = grad_span(n.b);
        for (int i = 0; i < n.size; ++i) { ga[i] += g[i]; gb[i] += g[i]; }
        break;
      }
      case Op::kSub: {
        auto ga = grad_span(n.a), gb = grad_span(n.b);
        for (int i = 0; i < n.size; ++i) { ga[i] += g[i]; gb[i] -= g[i]; }
        break;
      }
      case Op::kMul: {
        auto ga = grad_span(n.a), gb = grad_span(n.b);
        auto va = val_span(n.a), vb = val_span(n.b);
        for (int i = 0; i < n.size; ++i) {
          ga[i] += g[i] * vb[i];
          gb[i] += g[i] * va[i];
        }
        break;
      }
      case Op::kDiv: {
        auto ga = grad_span(n.a), gb = grad_span(n.b);
        auto va = val_span(n.a), vb = val_span(n.b);
        for (int i = 0; i < n.size; ++i) {
          ga[i] += g[i] / vb[i];
          gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
        }
        break;
      }
      case Op::kDot: {
        auto ga = grad_span(n.a), gb = grad_span(n.b);
        auto va = val_span(n.a), vb = val_span(n.b);
        const double g0 = g[0];
        for (std::size_t i = 0; i < va.size(); ++i) {
          ga[i] += g0 * vb[i];
          gb[i] += g0 * va[i];
        }
        break;
      }
      case Op::kTanh: {
        auto ga = grad_span(n.a);
        auto y = val_span(id);
        for (int i = 0; i < n.size; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::kRelu: {
        auto ga = grad_span(n.a);
        auto vx = val_span(n.a);
        for (int i = 0; i < n.size; ++i) {
          if (vx[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case Op::kSoftplus: {
        auto ga = grad_span(n.a);
        auto vx = val_span(n.a);
        for (int i = 0; i < n.size; ++i) ga[i] += g[i] * sigmoid(vx[i]);
        break;
      }
      case Op::kSquare: {
        auto ga = grad_span(n.a);
        auto vx = val_span(n.a);
        for (int i = 0; i < n.size; ++i) ga[i] += 2.0 * g[i] * vx[i];
        break;
      }
      case Op::kMean: {
        auto ga = grad_span(n.a);
        const double g0 = g[0] / static_cast<double>(nodes_[n.a].size);
        for (double& v : ga) v += g0;
        break;
      }
      case Op::kL2Norm: {
        auto ga = grad_span(n.a);
        auto vx = val_span(n.a);
        const double norm = val_span(id)[0];
        if (norm > 0.0) {
          const double g0 = g[0] / norm;
          for (std::size_t i = 0; i < vx.size(); ++i) ga[i] += g0 * vx[i];
        }
        break;
      }
      case Op::kL2Normalize: {
        auto ga = grad_span(n.a);
        auto vx = val_span(n.a);
        double s = 0.0, xg = 0.0;
        for (int i = 0; i < n.size; ++i) {
          s += vx[i] * vx[i];
          xg += vx[i] * g[i];
        }
        const double norm = std::sqrt(s);
        const double r = n.c0;
        for (int i = 0; i < n.size; ++i) {
          ga[i] += r * (g[i] / norm - vx[i] * xg / (norm * norm * norm));
        }
        break;
      }
      case Op::kMinConst: {
        auto ga = grad_span(n.a);
        auto vx = val_span(n.a);
        for (int i = 0; i < n.size; ++i) {
          if (vx[i] <= n.c0) ga[i] += g[i];
        }
        break;
      }
      case Op::kScale: {
        auto ga = grad_span(n.a);
        for (int i = 0; i < n.size; ++i) ga[i] += n.c0 * g[i];
        break;
      }
      case Op::kAddScalar:
      case Op::kAddConstVec: {
        auto ga = grad_span(n.a);
        for (int i = 0; i < n.size; ++i) ga[i] += g[i];
        break;
      }
      case Op::kDivByScalar: {
        auto ga = grad_span(n.a);
        auto gs = grad_span(n.b);
        auto va = val_span(n.a);
        const double d = val_span(n.b)[0];
        double acc = 0.0;
        for (int i = 0; i < n.size; ++i) {
          ga[i] += g[i] / d;
          acc += g[i] * va[i];
        }
        gs[0] -= acc / (d * d);
        break;
      }
      case Op::kMulByScalar: {
        auto ga = grad_span(n.a);
        auto gs = grad_span(n.b);
        auto va = val_span(n.a);
        const double d = val_span(n.b)[0];
        double acc = 0.0;
        for (int i = 0; i < n.size; ++i) {
          ga[i] += g[i] * d;
          acc += g[i] * va[i];
        }
        gs[0] += acc;
        break;
      }
      case Op::kMatVec: {
        const ParamRef& p = params_[n.b];
        auto ga = grad_span(n.a);
        auto vx = val_span(n.a);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            gw(p.grad, n.rows, n.cols);
        gw.noalias() += CMapVec(g.data(), n.rows) * CMapVec(vx.data(), n.cols).transpose();
        MapVec(ga.data(), n.cols).noalias() +=
            CMapMat(p.val, n.rows, n.cols).transpose() * CMapVec(g.data(), n.rows);
        break;
      }
      case Op::kConstMatVec: {
        auto ga = grad_span(n.a);
        MapVec(ga.data(), n.cols).noalias() +=
            CMapMat(n.cptr, n.rows, n.cols).transpose() * CMapVec(g.data(), n.rows);
        break;
      }
      case Op::kAddBias: {
        const ParamRef& p = params_[n.b];
        auto ga = grad_span(n.a);
        for (int i = 0; i < n.size; ++i) {
          ga[i] += g[i];
          p.grad[i] += g[i];
        }
        break;
      }
      case Op::kConcatCV: {
        auto ga = grad_span(n.a);
        const int p = n.rows;
        for (int i = 0; i < n.size - p; ++i) ga[i] += g[p + i];
        break;
      }
      case Op::kMeanVecs: {
        const double inv = 1.0 / static_cast<double>(n.vcount);
        for (int k = 0; k < n.vcount; ++k) {
          auto ga = grad_span(varargs_[n.voff + k]);
          for (int i = 0; i < n.size; ++i) ga[i] += g[i] * inv;
        }
        break;
      }
      case Op::kSumNodes: {
        for (int k = 0; k < n.vcount; ++k) {
          auto ga = grad_span(varargs_[n.voff + k]);
          for (int i = 0; i < n.size; ++i) ga[i] += g[i];
        }
        break;
      }
      case Op::kMatMulNT: {
        const ParamRef& p = params_[n.b];
        const int nr = n.size / n.rows;
        auto ga = grad_span(n.a);
        CMapMat gm(g.data(), nr, n.rows);
        MapMat(p.grad, n.rows, n.cols).noalias() +=
            gm.transpose() * CMapMat(val_span(n.a).data(), nr, n.cols);
        MapMat(ga.data(), nr, n.cols).noalias() += gm * CMapMat(p.val, n.rows, n.cols);
        break;
      }
      case Op::kConstMatMulNT: {
        const int nr = n.size / n.rows;
        auto ga = grad_span(n.a);
        MapMat(ga.data(), nr, n.cols).noalias() +=
            CMapMat(g.data(), nr, n.rows) * CMapMat(n.cptr, n.rows, n.cols);
        break;
      }
      case Op::kAddRowBias: {
        const ParamRef& p = params_[n.b];
        const int rows = n.size / n.rows;
        auto ga = grad_span(n.a);
        for (int i = 0; i < rows; ++i) {
          for (int k = 0; k < n.rows; ++k) {
            ga[i * n.rows + k] += g[i * n.rows + k];
            p.grad[k] += g[i * n.rows + k];
          }
        }
        break;
      }
      case Op::kAddRowConst: {
        auto ga = grad_span(n.a);
        for (int i = 0; i < n.size; ++i) ga[i] += g[i];
        break;
      }
      case Op::kRowDot: {
        const int d = n.rows;
        auto ga = grad_span(n.a), gb = grad_span(n.b);
        auto va = val_span(n.a), vb = val_span(n.b);
        for (int i = 0; i < n.size; ++i) {
          const double gi = g[i];
          for (int k = 0; k < d; ++k) {
            ga[i * d + k] += gi * vb[i * d + k];
            gb[i * d + k] += gi * va[i * d + k];
          }
        }
        break;
      }
      case Op::kRowL2Normalize: {
        const int d = n.rows;
        const int rows = n.size / d;
        auto ga = grad_span(n.a);
        auto vx = val_span(n.a);
        const double r = n.c0;
        for (int i = 0; i < rows; ++i) {
          double s = 0.0, xg = 0.0;
          for (int k = 0; k < d; ++k) {
            s += vx[i * d + k] * vx[i * d + k];
            xg += vx[i * d + k] * g[i * d + k];
          }
          const double norm = std::sqrt(s);
          for (int k = 0; k < d; ++k) {
            ga[i * d + k] += r * (g[i * d + k] / norm - vx[i * d + k] * xg / (norm * norm * norm));
          }
        }
        break;
      }
      case Op::kConcatRowsCV: {
        const int p = n.rows;
        const int d = n.cols;
        const int rows = n.size / (p + d);
        auto gz = grad_span(n.a);
        for (int i = 0; i < rows; ++i) {
          for (int k = 0; k < d; ++k) gz[k] += g[i * (p + d) + p + k];
        }
        break;
      }
      case Op::kColMean: {
        const int rows = n.rows;
        const int d = n.size;
        auto ga = grad_span(n.a);
        const double inv = 1.0 / rows;
        for (int i = 0; i < rows; ++i) {
          for (int k = 0; k < d; ++k) ga[i * d + k] += g[k] * inv;
        }
        break;
      }
      case Op::kOrthoPenaltyRows: {
        const int rows = n.rows;
        const int d = n.cols;
        scratch_.assign(static_cast<std::size_t>(d) * d, 0.0);
        MapMat c(scratch_.data(), d, d);
        CMapMat xm(val_span(n.a).data(), rows, d);
        c.noalias() = xm.transpose() * xm / static_cast<double>(rows);
        c -= RowMat::Identity(d, d);
        auto ga = grad_span(n.a);
        MapMat(ga.data(), rows, d).noalias() += (4.0 * g[0] / rows) * (xm * c);
        break;
      }
      case Op::kOrthoPenalty: {
        const int dim = n.rows;
        const double inv = 1.0 / static_cast<double>(n.vcount);
        scratch_.assign(static_cast<std::size_t>(dim) * dim, 0.0);
        for (int k = 0; k < n.vcount; ++k) {
          auto vx = val_span(varargs_[n.voff + k]);
          for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) scratch_[i * dim + j] += vx[i] * vx[j];
          }
        }
        for (int i = 0; i < dim; ++i) {
          for (int j = 0; j < dim; ++j) {
            scratch_[i * dim + j] = scratch_[i * dim + j] * inv - (i == j ? 1.0 : 0.0);
          }
        }
        const double g0 = g[0] * 4.0 * inv;
        for (int k = 0; k < n.vcount; ++k) {
          const int x = varargs_[n.voff + k];
          auto ga = grad_span(x);
          auto vx = val_span(x);
          for (int i = 0; i < dim; ++i) {
            double acc = 0.0;
            for (int j = 0; j < dim; ++j) acc += scratch_[i * dim + j] * vx[j];
            ga[i] += g0 * acc;
          }
        }
        break;
      }
    }
  }
}

}  // namespace zol::diff
